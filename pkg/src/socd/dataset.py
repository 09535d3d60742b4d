"""Offline dataset generation, storage, relabeling, and sampling.

On-disk format ("socd-dataset-v1"): a UTF-8 text file whose first line
is a JSON header and whose remaining J*T lines are one JSON transition
each, in episode order.  Header fields:

    format, config_hash, config, multihop (bool), layout
    {obs_dim, action_dim}, episodes, slots, policy {name, params},
    seed, summary {throughput mean/std, consumption mean/std per episode}

Transition fields (documented order):

    s   observation vector
    a   action vector (raw [0, v_max] scale)
    D   weighted instantaneous throughput
    E   resource consumption (scalar; list of per-node values in multi-hop)
    u   per-user served counts
    e   per-user consumption components (for user-level decomposition)
    ns  next observation
    done terminal flag

Rewards are never stored: r = D - lambda * E is derived on demand so a
single dataset serves every Lagrange-multiplier iteration exactly.
JSON float round-tripping is exact in Python, so write -> read is
bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, MultiHopConfig, config_hash
from .env import SingleHopEnv
from .multihop import MultiHopEnv

FORMAT_TAG = "socd-dataset-v1"


class DataFormatError(ValueError):
    """Raised for unreadable or inconsistent dataset files (CLI exit code 3)."""


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    throughput_D: float
    resource_E: float | np.ndarray
    served: np.ndarray
    user_resource: np.ndarray
    next_state: np.ndarray
    terminal: bool

    def to_json(self) -> str:
        E = self.resource_E
        return json.dumps(
            {
                "s": np.asarray(self.state, dtype=float).tolist(),
                "a": np.asarray(self.action, dtype=float).tolist(),
                "D": float(self.throughput_D),
                "E": E.tolist() if isinstance(E, np.ndarray) else float(E),
                "u": np.asarray(self.served, dtype=float).tolist(),
                "e": np.asarray(self.user_resource, dtype=float).tolist(),
                "ns": np.asarray(self.next_state, dtype=float).tolist(),
                "done": bool(self.terminal),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Transition":
        try:
            d = json.loads(line)
            E = d["E"]
            return cls(
                state=np.array(d["s"], dtype=float),
                action=np.array(d["a"], dtype=float),
                throughput_D=d["D"],
                resource_E=np.array(E, dtype=float) if isinstance(E, list) else float(E),
                served=np.array(d["u"], dtype=float),
                user_resource=np.array(d["e"], dtype=float),
                next_state=np.array(d["ns"], dtype=float),
                terminal=d["done"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataFormatError(f"bad transition line: {exc}") from exc


@dataclass
class OfflineDataset:
    header: dict
    transitions: list[Transition] = field(default_factory=list)

    @property
    def num_episodes(self) -> int:
        return self.header["episodes"]

    @property
    def slots_per_episode(self) -> int:
        return self.header["slots"]

    @property
    def multihop(self) -> bool:
        return bool(self.header.get("multihop", False))

    def episode(self, j: int) -> list[Transition]:
        T = self.slots_per_episode
        return self.transitions[j * T : (j + 1) * T]

    def states(self) -> np.ndarray:
        return np.array([tr.state for tr in self.transitions])

    def actions(self) -> np.ndarray:
        return np.array([tr.action for tr in self.transitions])

    def throughputs(self) -> np.ndarray:
        return np.array([tr.throughput_D for tr in self.transitions])

    def consumptions(self) -> np.ndarray:
        """Total consumption per transition (per-node values summed)."""
        return np.array(
            [
                float(np.sum(tr.resource_E)) if isinstance(tr.resource_E, np.ndarray)
                else tr.resource_E
                for tr in self.transitions
            ]
        )

    # -- reward relabeling ---------------------------------------------------
    def relabel(self, lam) -> np.ndarray:
        """Rewards r_t = D_t - lambda . E_t for every transition; no mutation.

        lambda may be a nonnegative scalar, or a per-node vector for
        multi-hop datasets (a scalar on a multi-hop dataset prices every
        node equally).
        """
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0):
            raise ValueError("lambda must be nonnegative")
        out = np.empty(len(self.transitions))
        for k, tr in enumerate(self.transitions):
            E = tr.resource_E
            if isinstance(E, np.ndarray):
                if lam.ndim == 0:
                    penalty = float(lam) * float(E.sum())
                else:
                    if lam.shape != E.shape:
                        raise ValueError(f"lambda shape {lam.shape} != node count {E.shape}")
                    penalty = float(lam @ E)
            else:
                if lam.ndim != 0:
                    raise ValueError("vector lambda on a single-hop dataset")
                penalty = float(lam) * E
            out[k] = tr.throughput_D - penalty
        return out

    # -- sampling ------------------------------------------------------------
    def sample_pairs(self, batch: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Uniform without-replacement batch of (state, action) pairs."""
        n = len(self.transitions)
        if batch > n:
            raise ValueError(f"batch {batch} exceeds dataset size {n}")
        idx = np.random.default_rng(seed).choice(n, size=batch, replace=False)
        return (
            np.array([self.transitions[i].state for i in idx]),
            np.array([self.transitions[i].action for i in idx]),
        )

    def sample_trajectories(self, batch: int, seed: int) -> list[list[Transition]]:
        J = self.num_episodes
        if batch > J:
            raise ValueError(f"batch {batch} exceeds episode count {J}")
        idx = np.random.default_rng(seed).choice(J, size=batch, replace=False)
        return [self.episode(int(j)) for j in idx]

    # -- summary -------------------------------------------------------------
    def episode_stats(self) -> dict:
        """Per-slot-average throughput/consumption, mean +/- std across episodes."""
        J, T = self.num_episodes, self.slots_per_episode
        if J == 0:
            return {k: 0.0 for k in ("throughput_mean", "throughput_std",
                                     "consumption_mean", "consumption_std")}
        D = self.throughputs().reshape(J, T).mean(axis=1)
        E = self.consumptions().reshape(J, T).mean(axis=1)
        return {
            "throughput_mean": float(D.mean()),
            "throughput_std": float(D.std()),
            "consumption_mean": float(E.mean()),
            "consumption_std": float(E.std()),
        }


def make_env(config: EnvConfig | MultiHopConfig, seed: int | None = None):
    if isinstance(config, MultiHopConfig):
        return MultiHopEnv(config, seed=seed)
    return SingleHopEnv(config, seed=seed)


def generate(
    config: EnvConfig | MultiHopConfig,
    policy,
    num_episodes: int,
    seed: int,
    policy_descr: dict | None = None,
) -> OfflineDataset:
    """Roll out `policy` for J full episodes and package the transitions.

    `policy` follows the repository policy protocol: act(obs, rng) -> flat
    action.  Each episode gets its own env and policy RNG stream derived
    from the master seed, so generation is reproducible and shardable.
    """
    multihop = isinstance(config, MultiHopConfig)
    base = config.base if multihop else config
    T = base.episode_len
    transitions: list[Transition] = []
    for j in range(num_episodes):
        env = make_env(config, seed=seed + 1000003 * j)
        policy_rng = np.random.default_rng((seed, j))
        obs = env.reset()
        for _ in range(T):
            action = policy.act(obs, policy_rng)
            out = env.step(action)
            user_res = _per_user_consumption(env.layout, obs, action, base.v_max)
            transitions.append(
                Transition(
                    state=obs,
                    action=np.clip(np.asarray(action, dtype=float), 0.0, base.v_max),
                    throughput_D=out.throughput_D,
                    resource_E=out.node_resource if multihop else out.resource_E,
                    served=out.served,
                    user_resource=user_res,
                    next_state=out.next_obs,
                    terminal=out.terminal,
                )
            )
            obs = out.next_obs

    cfg_dict = config.to_dict()
    header = {
        "format": FORMAT_TAG,
        "config_hash": config_hash(cfg_dict),
        "config": cfg_dict,
        "multihop": multihop,
        "layout": {"obs_dim": _layout_of(config).obs_dim, "action_dim": _layout_of(config).action_dim},
        "episodes": num_episodes,
        "slots": T,
        "policy": policy_descr or {"name": type(policy).__name__},
        "seed": seed,
    }
    ds = OfflineDataset(header=header, transitions=transitions)
    header["summary"] = ds.episode_stats()
    return ds


def _layout_of(config):
    from .config import multi_hop_layout, single_hop_layout

    if isinstance(config, MultiHopConfig):
        return multi_hop_layout(config)
    return single_hop_layout(config)


def _per_user_consumption(layout, obs, action, v_max) -> np.ndarray:
    """Per-user v_i . Q_i from the observation's queue blocks."""
    action = np.clip(np.asarray(action, dtype=float), 0.0, v_max)
    out = np.zeros(layout.num_users)
    for qsl, asl, user in zip(layout.queue_slices, layout.action_slices, layout.block_user):
        out[user] += float(np.dot(obs[qsl], action[asl]))
    return out


def write_dataset(ds: OfflineDataset, path: str):
    with open(path, "w") as f:
        f.write(json.dumps(ds.header, sort_keys=True, separators=(",", ":")) + "\n")
        for tr in ds.transitions:
            f.write(tr.to_json() + "\n")


def read_dataset(path: str) -> OfflineDataset:
    try:
        with open(path) as f:
            header_line = f.readline()
            if not header_line:
                raise DataFormatError(f"{path}: empty file")
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: bad header: {exc}") from exc
            if header.get("format") != FORMAT_TAG:
                raise DataFormatError(f"{path}: not a {FORMAT_TAG} file")
            transitions = [Transition.from_json(line) for line in f if line.strip()]
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    expected = header["episodes"] * header["slots"]
    if len(transitions) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} transitions, found {len(transitions)}"
        )
    if config_hash(header["config"]) != header["config_hash"]:
        raise DataFormatError(f"{path}: header hash does not match embedded config")
    return OfflineDataset(header=header, transitions=transitions)


def dataset_config(ds: OfflineDataset) -> EnvConfig | MultiHopConfig:
    if ds.multihop:
        return MultiHopConfig.from_dict(ds.header["config"])
    return EnvConfig.from_dict(ds.header["config"])
