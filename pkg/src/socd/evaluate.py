"""Evaluation harness: rollouts, metric aggregation, budget sweeps.

A report holds per-round per-slot-average throughput and consumption for
a number of independent rollout rounds; aggregates are the mean +/- std
across rounds.  Sweeps cross policies with budget values and write one
delimiter-separated table; plotting is an optional thin emitter on top
of the tables.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, MultiHopConfig, config_hash
from .dataset import make_env


@dataclass
class EvalReport:
    policy_id: str
    rounds: int
    slots: int
    round_throughput: list[float]       # per-round per-slot mean D
    round_consumption: list[float]      # per-round per-slot mean E (total)
    clipped: int
    config_hash: str
    seed: int
    throughput_mean: float = field(init=False)
    throughput_std: float = field(init=False)
    consumption_mean: float = field(init=False)
    consumption_std: float = field(init=False)

    def __post_init__(self):
        if self.rounds <= 0:
            raise ValueError("rounds must be > 0")
        d = np.asarray(self.round_throughput)
        e = np.asarray(self.round_consumption)
        self.throughput_mean = float(d.mean())
        self.throughput_std = float(d.std())
        self.consumption_mean = float(e.mean())
        self.consumption_std = float(e.std())


def evaluate(
    policy,
    config: EnvConfig | MultiHopConfig,
    rounds: int = 5,
    slots: int = 200,
    seed: int = 0,
    policy_id: str | None = None,
) -> EvalReport:
    """Run independent rollout rounds; per-slot D(t), E(t) are accumulated."""
    multihop = isinstance(config, MultiHopConfig)
    # evaluation length is independent of the training episode_len; work on
    # a copy so the caller's config is untouched
    cfg_dict = config.to_dict()
    if multihop:
        cfg_dict["base"]["episode_len"] = slots
        run_config = MultiHopConfig.from_dict(cfg_dict)
    else:
        cfg_dict["episode_len"] = slots
        run_config = EnvConfig.from_dict(cfg_dict)
    round_D, round_E = [], []
    clipped = 0
    for r in range(rounds):
        env = make_env(run_config, seed=seed + 7919 * r)
        obs = env.reset()
        policy_rng = np.random.default_rng((seed, r))
        D = E = 0.0
        for _ in range(slots):
            action = policy.act(obs, policy_rng)
            out = env.step(action)
            D += out.throughput_D
            E += float(np.sum(out.resource_E))
            clipped += out.clipped
            obs = out.next_obs
        round_D.append(D / slots)
        round_E.append(E / slots)
    return EvalReport(
        policy_id=policy_id or type(policy).__name__,
        rounds=rounds,
        slots=slots,
        round_throughput=round_D,
        round_consumption=round_E,
        clipped=clipped,
        config_hash=config_hash(config.to_dict()),
        seed=seed,
    )


def sweep(
    policy_factories: dict,
    config: EnvConfig | MultiHopConfig,
    budgets: list[float],
    out_path: str,
    rounds: int = 5,
    slots: int = 200,
    seed: int = 0,
) -> list[dict]:
    """Cross-product of policies x budgets -> one CSV table.

    policy_factories maps a policy name to a callable budget -> policy.
    Partial failures are recorded per cell and the sweep continues.
    """
    rows = []
    for name in policy_factories:
        for budget in budgets:
            try:
                policy = policy_factories[name](budget)
                rep = evaluate(policy, config, rounds=rounds, slots=slots,
                               seed=seed, policy_id=name)
                rows.append({
                    "policy": name, "E0": budget,
                    "D_mean": rep.throughput_mean, "D_std": rep.throughput_std,
                    "E_mean": rep.consumption_mean, "E_std": rep.consumption_std,
                    "error": "",
                })
            except Exception as exc:  # record and keep sweeping
                rows.append({"policy": name, "E0": budget, "D_mean": "", "D_std": "",
                             "E_mean": "", "E_std": "", "error": str(exc)})
    write_sweep_table(rows, out_path)
    return rows


SWEEP_COLUMNS = ["policy", "E0", "D_mean", "D_std", "E_mean", "E_std", "error"]


def write_sweep_table(rows: list[dict], path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in SWEEP_COLUMNS})


def read_sweep_table(path: str) -> list[dict]:
    with open(path, newline="") as f:
        rows = []
        for row in csv.DictReader(f):
            for key in ("E0", "D_mean", "D_std", "E_mean", "E_std"):
                if row[key] != "":
                    row[key] = float(row[key])
            rows.append(row)
        return rows


def plot_sweep(rows: list[dict], out_prefix: str):
    """Optional SVG emitter: throughput and consumption vs budget."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    policies = sorted({r["policy"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for name in policies:
        sub = sorted((r for r in rows if r["policy"] == name and r["error"] == ""),
                     key=lambda r: r["E0"])
        x = [r["E0"] for r in sub]
        for ax, mean_key, std_key, title in (
            (axes[0], "D_mean", "D_std", "throughput"),
            (axes[1], "E_mean", "E_std", "resource consumption"),
        ):
            y = np.array([r[mean_key] for r in sub])
            s = np.array([r[std_key] for r in sub])
            ax.errorbar(x, y, yerr=s, marker="o", capsize=3, label=name)
            ax.set_xlabel("budget E0")
            ax.set_title(title)
    axes[0].legend()
    fig.tight_layout()
    path = out_prefix + ".svg"
    fig.savefig(path)
    plt.close(fig)
    return path
