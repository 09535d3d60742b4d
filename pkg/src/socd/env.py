"""Single-hop multi-user delay-constrained queueing simulator.

Discrete time.  Per slot, in this order:

    1. arrivals enter at full lifetime tau_i (slot 0 arrivals happen in reset)
    2. the scheduler observes [A(t) | Q_1..Q_N | c(t)] and picks per-job
       allocations v_i^tau in [0, v_max]
    3. each job draws an independent Bernoulli with success probability
       tanh(v / (l_i^3 c_i)); successes leave and count into u_i(t)
    4. resource E(t) = sum_i v_i . Q_i is charged on allocation (not success)
    5. survivors age one slot; lifetime-0 failures are discarded
    6. each user's channel advances by its Markov chain
    7. next-slot arrivals enter

Reward components D(t) = sum_i omega_i u_i(t) and E(t) are returned per
step so rewards r = D - lambda*E can be relabeled offline for any lambda.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, ObsLayout, single_hop_layout


def success_prob(v, c, l):
    """Probability a job with allocation v succeeds: 2/(1+exp(-2v/(l^3 c))) - 1.

    Mathematically equal to tanh(v / (l^3 c)).  Accepts scalars or arrays.
    """
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    l = np.asarray(l, dtype=float)
    if np.any(c <= 0):
        raise ValueError("channel value c must be > 0")
    if np.any(l <= 0):
        raise ValueError("distance l must be > 0")
    if np.any(v < 0):
        raise ValueError("allocation v must be >= 0")
    out = 2.0 / (1.0 + np.exp(-2.0 * v / (l ** 3 * c))) - 1.0
    return out if out.ndim else float(out)


@dataclass
class StepOutcome:
    served: np.ndarray          # u_i(t)
    throughput_D: float         # sum_i omega_i u_i(t)
    resource_E: float           # sum_i v_i . Q_i  (per-node vector in multi-hop)
    next_obs: np.ndarray
    expired: np.ndarray         # discarded jobs per user
    clipped: int = 0            # action entries clipped into [0, v_max]
    terminal: bool = False
    node_resource: np.ndarray | None = None
    jobs_before: np.ndarray = field(default=None)  # queue totals at decision time


class SingleHopEnv:
    """Stateful single-threaded simulator; one RNG stream per instance."""

    def __init__(self, config: EnvConfig, seed: int | None = None):
        self.cfg = config
        self.layout: ObsLayout = single_hop_layout(config)
        self.seed = config.seed if seed is None else seed
        self.reset()

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)
        cfg = self.cfg
        self.t = 0
        self.queues = [np.zeros(tau + 1, dtype=np.int64) for tau in cfg.deadlines]
        # initial channel states: uniform over the chain's state space
        self.channel_idx = np.array(
            [self.rng.integers(len(cfg.channel_states)) for _ in range(cfg.num_users)]
        )
        self._apply_arrivals()
        return self.observe()

    def _apply_arrivals(self):
        cfg = self.cfg
        self.arrivals = np.array(
            [self.rng.poisson(rate) for rate in cfg.arrival_rates], dtype=np.int64
        )
        for i in range(cfg.num_users):
            self.queues[i][cfg.deadlines[i]] += self.arrivals[i]

    def observe(self) -> np.ndarray:
        cfg = self.cfg
        parts = [self.arrivals.astype(float)]
        parts += [q.astype(float) for q in self.queues]
        if not cfg.partial_obs:
            parts.append(np.array([cfg.channel_states[k] for k in self.channel_idx]))
        return np.concatenate(parts)

    def split_action(self, action: np.ndarray) -> list[np.ndarray]:
        return [np.asarray(action[sl], dtype=float) for sl in self.layout.action_slices]

    def step(self, action: np.ndarray) -> StepOutcome:
        if self.t >= self.cfg.episode_len:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.cfg
        action = np.asarray(action, dtype=float)
        if action.shape != (self.layout.action_dim,):
            raise ValueError(
                f"action must have shape ({self.layout.action_dim},), got {action.shape}"
            )
        clipped_mask = (action < 0) | (action > cfg.v_max)
        n_clipped = int(clipped_mask.sum())
        action = np.clip(action, 0.0, cfg.v_max)
        allocs = self.split_action(action)

        served = np.zeros(cfg.num_users, dtype=np.int64)
        expired = np.zeros(cfg.num_users, dtype=np.int64)
        jobs_before = np.array([int(q.sum()) for q in self.queues])
        resource = 0.0
        new_queues = [np.zeros_like(q) for q in self.queues]

        for i in range(cfg.num_users):
            c = cfg.channel_states[self.channel_idx[i]]
            l = cfg.distances[i]
            q = self.queues[i]
            v = allocs[i]
            resource += float(v @ q)
            for tau in range(cfg.deadlines[i] + 1):
                m = int(q[tau])
                if m == 0:
                    continue
                p = success_prob(v[tau], c, l)
                succ = int(np.count_nonzero(self.rng.random(m) < p))
                served[i] += succ
                survivors = m - succ
                if survivors:
                    if tau == 0:
                        expired[i] += survivors
                    else:
                        new_queues[i][tau - 1] += survivors
        self.queues = new_queues

        # channel Markov transition, one uniform draw per user
        trans = cfg.channel_transition
        for i in range(cfg.num_users):
            cum = np.cumsum(trans[self.channel_idx[i]])
            nxt = int(np.searchsorted(cum, self.rng.random(), side="right"))
            self.channel_idx[i] = min(nxt, len(cum) - 1)

        self.t += 1
        terminal = self.t >= cfg.episode_len
        self._apply_arrivals()

        throughput = float(np.dot(cfg.weights, served))
        return StepOutcome(
            served=served,
            throughput_D=throughput,
            resource_E=resource,
            next_obs=self.observe(),
            expired=expired,
            clipped=n_clipped,
            terminal=terminal,
            jobs_before=jobs_before,
        )
