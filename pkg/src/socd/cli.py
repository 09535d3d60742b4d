"""Command-line entry point.

Subcommands:

    gen-data   roll out a behavior policy and write an offline dataset
    train-bc   fit only the diffusion behavior-cloning model
    train      full training (BC once + Lagrange multiplier iteration)
    eval       evaluate a trained policy or baseline on an environment
    sweep      cross policies with a budget list, write a results table
    baseline   evaluate Uniform/EDF without any training artifacts

Exit codes: 0 success, 2 config error, 3 data-format error.  The output
directory for train/sweep may be overridden with $SOCD_OUT_DIR.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .baselines import BCPolicy, EDFPolicy, NoisyEDFPolicy, UniformPolicy
from .config import (ConfigError, EnvConfig, MultiHopConfig, config_hash,
                     load_config, multi_hop_layout, single_hop_layout)
from .dataset import (DataFormatError, dataset_config, generate, read_dataset,
                      write_dataset)
from .diffusion import (ScoreModel, load_score_model, save_score_model, train_bc)
from .evaluate import evaluate, plot_sweep, sweep
from .loop import SelectionConfig, SOCDPolicy, TrainConfig, train
from .nn import load_net, save_net


def _layout_for(config):
    if isinstance(config, MultiHopConfig):
        return multi_hop_layout(config)
    return single_hop_layout(config)


def _base(config):
    return config.base if isinstance(config, MultiHopConfig) else config


def _out_dir(args) -> str:
    out = os.environ.get("SOCD_OUT_DIR", args.out)
    os.makedirs(out, exist_ok=True)
    return out


def _behavior_policy(name: str, config, budget=None):
    layout = _layout_for(config)
    base = _base(config)
    budget = base.budget_E0 if budget is None else budget
    if budget < 0:
        raise ConfigError("budget must be >= 0")
    if name == "noisy-edf":
        return NoisyEDFPolicy(layout, budget, base.weights, base.v_max)
    if name == "edf":
        return EDFPolicy(layout, budget, base.weights, base.v_max)
    if name == "uniform":
        return UniformPolicy(layout, budget, base.v_max)
    raise ConfigError(f"unknown behavior policy {name!r}")


def cmd_gen_data(args):
    config = load_config(args.config)
    policy = _behavior_policy(args.policy, config)
    ds = generate(config, policy, num_episodes=args.episodes, seed=args.seed,
                  policy_descr={"name": args.policy,
                                "budget": _base(config).budget_E0})
    write_dataset(ds, args.out)
    print(f"wrote {args.out}: {ds.num_episodes} episodes x {ds.slots_per_episode} slots")
    print(f"summary: {json.dumps(ds.header['summary'])}")


def cmd_train_bc(args):
    ds = read_dataset(args.data)
    base = _base(dataset_config(ds))
    states, actions = ds.states(), ds.actions()
    model = ScoreModel(action_dim=actions.shape[1], state_dim=states.shape[1],
                       v_max=base.v_max, seed=args.seed)
    train_bc(model, states, actions, steps=args.steps, lr=args.lr,
             seed=args.seed, log_every=500)
    out = _out_dir(args)
    save_score_model(model, os.path.join(out, "bc_model"))
    print(f"saved BC model to {out}/bc_model.*")


def cmd_train(args):
    ds = read_dataset(args.data)
    cfg = TrainConfig(seed=args.seed, verbose=True,
                      k_outer=args.k_outer, bc_steps=args.bc_steps,
                      lam_init=args.lam_init, lam_step=args.lam_step,
                      decomposed=args.decomposed)
    if args.budget is not None:
        cfg.budget = args.budget
    result = train(ds, cfg)
    out = _out_dir(args)
    save_score_model(result.model, os.path.join(out, "bc_model"))
    save_net(result.critic.q1, os.path.join(out, "critic_q1.net"))
    save_net(result.critic.q2, os.path.join(out, "critic_q2.net"))
    with open(os.path.join(out, "lambda_history.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "lambda", "E_hat"])
        for k, (lam, e_hat) in enumerate(result.lagrange.history):
            writer.writerow([k, repr(lam), repr(e_hat)])
    manifest = {
        "seed": args.seed,
        "data": args.data,
        "data_config_hash": ds.header["config_hash"],
        "final_lambda": result.lagrange.lam,
        "bc_hashes": result.bc_hashes,
        "decomposed": cfg.decomposed,
        "gamma": cfg.gamma,
        "k_outer": cfg.k_outer,
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    print(f"final lambda {result.lagrange.lam:.4f}; artifacts in {out}/")


def _load_socd_policy(model_dir, config, k_samples, mode):
    from .critic import CriticPair

    model = load_score_model(os.path.join(model_dir, "bc_model"))
    base = _base(config)
    layout = _layout_for(config)
    q1_path = os.path.join(model_dir, "critic_q1.net")
    if not os.path.exists(q1_path):
        return BCPolicy(model)
    critic = CriticPair(state_dim=layout.obs_dim, action_dim=layout.action_dim)
    critic.q1 = load_net(q1_path)
    critic.q2 = load_net(os.path.join(model_dir, "critic_q2.net"))
    sel = SelectionConfig(mode=mode, num_samples=k_samples)
    return SOCDPolicy(model, critic, sel)


def cmd_eval(args):
    config = load_config(args.config)
    if args.policy in ("uniform", "edf", "noisy-edf"):
        policy = _behavior_policy(args.policy, config, budget=args.budget)
    elif args.policy == "bc":
        model = load_score_model(os.path.join(args.model_dir, "bc_model"))
        policy = BCPolicy(model)
    elif args.policy == "socd":
        policy = _load_socd_policy(args.model_dir, config, args.k_samples, args.mode)
    else:
        raise ConfigError(f"unknown policy {args.policy!r}")
    rep = evaluate(policy, config, rounds=args.rounds, slots=args.slots,
                   seed=args.seed, policy_id=args.policy)
    print(json.dumps({
        "policy": rep.policy_id, "rounds": rep.rounds, "slots": rep.slots,
        "throughput": [rep.throughput_mean, rep.throughput_std],
        "consumption": [rep.consumption_mean, rep.consumption_std],
        "clipped": rep.clipped, "config_hash": rep.config_hash,
    }, indent=1))


def cmd_sweep(args):
    config = load_config(args.config)
    layout = _layout_for(config)
    base = _base(config)
    factories = {
        "uniform": lambda b: UniformPolicy(layout, b, base.v_max),
        "edf": lambda b: EDFPolicy(layout, b, base.weights, base.v_max),
    }
    if args.model_dir:
        factories["bc"] = lambda b: BCPolicy(
            load_score_model(os.path.join(args.model_dir, "bc_model")))
        factories["socd"] = lambda b: _load_socd_policy(
            args.model_dir, config, args.k_samples, args.mode)
    out = _out_dir(args)
    table_path = os.path.join(out, "sweep.csv")
    rows = sweep(factories, config, budgets=args.budgets, out_path=table_path,
                 rounds=args.rounds, slots=args.slots, seed=args.seed)
    print(f"wrote {table_path} ({len(rows)} rows)")
    if args.plot:
        print(f"wrote {plot_sweep(rows, os.path.join(out, 'sweep'))}")


def cmd_baseline(args):
    config = load_config(args.config)
    policy = _behavior_policy(args.policy, config, budget=args.budget)
    rep = evaluate(policy, config, rounds=args.rounds, slots=args.slots,
                   seed=args.seed, policy_id=args.policy)
    print(json.dumps({
        "policy": rep.policy_id,
        "throughput": [rep.throughput_mean, rep.throughput_std],
        "consumption": [rep.consumption_mean, rep.consumption_std],
    }, indent=1))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socd", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--policy", default="noisy-edf")
    g.add_argument("--episodes", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    b = sub.add_parser("train-bc", help="train the diffusion BC model only")
    b.add_argument("--data", required=True)
    b.add_argument("--steps", type=int, default=6000)
    b.add_argument("--lr", type=float, default=1e-4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="runs/bc")
    b.set_defaults(func=cmd_train_bc)

    t = sub.add_parser("train", help="full training with Lagrange iteration")
    t.add_argument("--data", required=True)
    t.add_argument("--out", default="runs/socd")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--k-outer", type=int, default=8)
    t.add_argument("--bc-steps", type=int, default=6000)
    t.add_argument("--lam-init", type=float, default=0.5)
    t.add_argument("--lam-step", type=float, default=0.05)
    t.add_argument("--budget", type=float, default=None)
    t.add_argument("--decomposed", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a policy")
    e.add_argument("--config", required=True)
    e.add_argument("--policy", required=True,
                   choices=["uniform", "edf", "noisy-edf", "bc", "socd"])
    e.add_argument("--model-dir", default=None)
    e.add_argument("--budget", type=float, default=None)
    e.add_argument("--rounds", type=int, default=5)
    e.add_argument("--slots", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--k-samples", type=int, default=64)
    e.add_argument("--mode", default="argmax", choices=["argmax", "softmax"])
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="policies x budgets -> table")
    s.add_argument("--config", required=True)
    s.add_argument("--budgets", type=float, nargs="+", required=True)
    s.add_argument("--model-dir", default=None)
    s.add_argument("--out", default="runs/sweep")
    s.add_argument("--rounds", type=int, default=5)
    s.add_argument("--slots", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k-samples", type=int, default=64)
    s.add_argument("--mode", default="argmax", choices=["argmax", "softmax"])
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_sweep)

    bl = sub.add_parser("baseline", help="evaluate Uniform/EDF directly")
    bl.add_argument("--config", required=True)
    bl.add_argument("--policy", required=True, choices=["uniform", "edf", "noisy-edf"])
    bl.add_argument("--budget", type=float, default=None)
    bl.add_argument("--rounds", type=int, default=5)
    bl.add_argument("--slots", type=int, default=200)
    bl.add_argument("--seed", type=int, default=0)
    bl.set_defaults(func=cmd_baseline)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
