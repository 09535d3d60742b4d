"""Reference schedulers: Uniform, Earliest-Deadline-First, diffusion BC.

All policies share one protocol -- act(obs, rng) -> flat action vector --
so the evaluation harness is policy-agnostic.  Uniform and EDF treat the
budget as a hard per-slot limit (learned policies face only the average
constraint); both read job counts from the observation's queue blocks
through the layout, so they work unchanged for single- and multi-hop
observations.
"""

from __future__ import annotations

import numpy as np

from .config import ObsLayout
from .diffusion import ScoreModel, sample_actions


class ZeroPolicy:
    """Allocates nothing; useful as a degenerate reference."""

    def __init__(self, layout: ObsLayout):
        self.layout = layout

    def act(self, obs, rng) -> np.ndarray:
        return np.zeros(self.layout.action_dim)


class UniformPolicy:
    """Spreads the per-slot budget evenly over every job in the buffer."""

    def __init__(self, layout: ObsLayout, budget: float, v_max: float):
        if budget < 0:
            raise ValueError("budget must be >= 0")
        self.layout = layout
        self.budget = budget
        self.v_max = v_max
        self.cap_binding_slots = 0
        self.slots_seen = 0

    def act(self, obs, rng) -> np.ndarray:
        counts = np.asarray(obs, dtype=float)[self.layout.cell_obs_index]
        total_jobs = counts.sum()
        action = np.zeros(self.layout.action_dim)
        self.slots_seen += 1
        if total_jobs <= 0:
            return action
        per_job = self.budget / total_jobs
        if per_job > self.v_max:
            per_job = self.v_max
            self.cap_binding_slots += 1
        action[counts > 0] = per_job
        return action


class EDFPolicy:
    """Greedy earliest-deadline-first fill under a hard per-slot budget.

    Cells are visited by ascending remaining lifetime; ties across users
    at equal lifetime break by descending weight, then ascending user
    index.  Each job in a funded cell gets e_max (capped at v_max) until
    the cumulative allocated resource reaches the budget; the last cell
    is partially funded so the slot consumption hits the budget exactly.
    """

    def __init__(self, layout: ObsLayout, budget: float, weights, v_max: float,
                 e_max: float | None = None):
        if budget < 0:
            raise ValueError("budget must be >= 0")
        self.layout = layout
        self.budget = budget
        self.e_max = min(v_max if e_max is None else e_max, v_max)
        if self.e_max < 0:
            raise ValueError("e_max must be >= 0")
        weights = np.asarray(weights, dtype=float)
        order_keys = [
            (layout.cell_lifetimes[k], -weights[layout.cell_user[k]], layout.cell_user[k], k)
            for k in range(layout.action_dim)
        ]
        self.visit_order = [k for *_, k in sorted(order_keys)]

    def act(self, obs, rng) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        action = np.zeros(self.layout.action_dim)
        remaining = self.budget
        for k in self.visit_order:
            if remaining <= 0:
                break
            m = obs[self.layout.cell_obs_index[k]]
            if m <= 0:
                continue
            cost = self.e_max * m
            if cost <= remaining:
                action[k] = self.e_max
                remaining -= cost
            else:
                action[k] = remaining / m
                remaining = 0.0
        return action


class NoisyEDFPolicy:
    """EDF with per-job uniform perturbation and occasional random slots.

    The behavior policy for synthetic dataset generation: EDF allocation
    plus noise in [-noise_frac, +noise_frac] * v_max per cell (clipped to
    [0, v_max]), and with probability eps_random the whole slot's action
    is drawn uniformly from [0, v_max] instead.  Gives suboptimal, diverse
    state-action coverage.
    """

    def __init__(self, layout: ObsLayout, budget: float, weights, v_max: float,
                 noise_frac: float = 0.3, eps_random: float = 0.1):
        self.edf = EDFPolicy(layout, budget, weights, v_max)
        self.layout = layout
        self.v_max = v_max
        self.noise_frac = noise_frac
        self.eps_random = eps_random

    def act(self, obs, rng) -> np.ndarray:
        if rng.random() < self.eps_random:
            return rng.random(self.layout.action_dim) * self.v_max
        base = self.edf.act(obs, rng)
        noise = rng.uniform(-self.noise_frac, self.noise_frac, size=base.shape) * self.v_max
        return np.clip(base + noise, 0.0, self.v_max)


class MixturePolicy:
    """Per-slot mixture of sub-policies, drawn by fixed probabilities.

    The standard way to build mixed-skill offline corpora: e.g. half the
    slots from a competent scheduler, half from a mis-prioritized one.
    """

    def __init__(self, policies, probs):
        probs = np.asarray(probs, dtype=float)
        if len(policies) != len(probs) or len(policies) == 0:
            raise ValueError("need one probability per policy")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        self.policies = list(policies)
        self.probs = probs

    def act(self, obs, rng) -> np.ndarray:
        k = rng.choice(len(self.policies), p=self.probs)
        return self.policies[k].act(obs, rng)


class BCPolicy:
    """Pure diffusion behavior cloning: one sample per state, no critic.

    `num_samples > 1` switches to the mean of K samples.
    """

    def __init__(self, model: ScoreModel, solver_steps: int = 10, num_samples: int = 1):
        self.model = model
        self.solver_steps = solver_steps
        self.num_samples = num_samples

    def act(self, obs, rng) -> np.ndarray:
        samples = sample_actions(self.model, np.asarray(obs, dtype=float),
                                 self.num_samples, rng, steps=self.solver_steps)
        return samples.mean(axis=0) if self.num_samples > 1 else samples[0]


class ReplayPolicy:
    """Emits a fixed pre-recorded action sequence (testing aid)."""

    def __init__(self, actions):
        self.actions = [np.asarray(a, dtype=float) for a in actions]
        self.i = 0

    def act(self, obs, rng) -> np.ndarray:
        a = self.actions[self.i % len(self.actions)]
        self.i += 1
        return a
