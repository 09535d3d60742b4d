"""Multi-hop extension: flows traverse routed node sequences.

Hop-indexed buffers: flow i at hop j holds jobs with lifetimes in
0..tau_i - j + 1 (a job needs one slot per remaining hop).  A job that
succeeds at hop j < J_i moves to the hop j+1 buffer with lifetime tau-1
and becomes servable next slot (store-and-forward); success at the final
hop counts into u_i(t).  Failures age in place; lifetime-0 failures are
discarded, as is a lifetime-0 success at a non-final hop (it can no
longer reach its destination).

Each (flow, node) pair carries its own channel chain, so with K=1 and
J=1 the simulator consumes random draws in exactly the same order as
SingleHopEnv and reproduces its trajectories bit for bit.

Per-node consumption: E^(k)(t) = sum_i sum_j h_jk^(i) v_i^(j) . Q_i^(j).
"""

from __future__ import annotations

import numpy as np

from .config import MultiHopConfig, ObsLayout, multi_hop_layout
from .env import StepOutcome, success_prob


class MultiHopEnv:
    """Stateful multi-hop simulator; same stepping discipline as SingleHopEnv."""

    def __init__(self, config: MultiHopConfig, seed: int | None = None):
        self.cfg = config
        self.base = config.base
        self.layout: ObsLayout = multi_hop_layout(config)
        self.seed = self.base.seed if seed is None else seed
        self.reset()

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)
        cfg, base = self.cfg, self.base
        self.t = 0
        # queues[i][j-1] holds flow i, hop j (lifetimes 0..tau_i-j+1)
        self.queues = [
            [np.zeros(base.deadlines[i] - j + 2, dtype=np.int64) for j in range(1, cfg.path_lens[i] + 1)]
            for i in range(base.num_users)
        ]
        n_states = len(base.channel_states)
        self.channel_idx = np.array(
            [
                [self.rng.integers(n_states) for _ in range(cfg.num_nodes)]
                for _ in range(base.num_users)
            ]
        )
        self._apply_arrivals()
        return self.observe()

    def _apply_arrivals(self):
        base = self.base
        self.arrivals = np.array(
            [self.rng.poisson(rate) for rate in base.arrival_rates], dtype=np.int64
        )
        for i in range(base.num_users):
            self.queues[i][0][base.deadlines[i]] += self.arrivals[i]

    def observe(self) -> np.ndarray:
        base = self.base
        parts = [self.arrivals.astype(float)]
        for i in range(base.num_users):
            parts += [q.astype(float) for q in self.queues[i]]
        if not base.partial_obs:
            chan = [
                base.channel_states[self.channel_idx[i][k]]
                for i in range(base.num_users)
                for k in range(self.cfg.num_nodes)
            ]
            parts.append(np.array(chan))
        return np.concatenate(parts)

    def split_action(self, action: np.ndarray) -> list[list[np.ndarray]]:
        out = []
        b = 0
        for i in range(self.base.num_users):
            hops = []
            for _ in range(self.cfg.path_lens[i]):
                sl = self.layout.action_slices[b]
                hops.append(np.asarray(action[sl], dtype=float))
                b += 1
            out.append(hops)
        return out

    def node_consumption(self, action: np.ndarray) -> np.ndarray:
        """Per-node E^(k)(t) for `action` against the current queues."""
        allocs = self.split_action(np.clip(np.asarray(action, dtype=float), 0.0, self.base.v_max))
        cons = np.zeros(self.cfg.num_nodes)
        for i in range(self.base.num_users):
            for j in range(self.cfg.path_lens[i]):
                node = self.cfg.routes[i][j] - 1
                cons[node] += float(allocs[i][j] @ self.queues[i][j])
        return cons

    def step(self, action: np.ndarray) -> StepOutcome:
        if self.t >= self.base.episode_len:
            raise RuntimeError("episode finished; call reset()")
        cfg, base = self.cfg, self.base
        action = np.asarray(action, dtype=float)
        if action.shape != (self.layout.action_dim,):
            raise ValueError(
                f"action must have shape ({self.layout.action_dim},), got {action.shape}"
            )
        clipped_mask = (action < 0) | (action > base.v_max)
        n_clipped = int(clipped_mask.sum())
        action = np.clip(action, 0.0, base.v_max)
        allocs = self.split_action(action)

        served = np.zeros(base.num_users, dtype=np.int64)
        expired = np.zeros(base.num_users, dtype=np.int64)
        jobs_before = np.array([sum(int(q.sum()) for q in self.queues[i]) for i in range(base.num_users)])
        node_res = np.zeros(cfg.num_nodes)
        new_queues = [
            [np.zeros_like(q) for q in self.queues[i]] for i in range(base.num_users)
        ]

        # all service outcomes are computed from the slot-start snapshot, so a
        # job advancing a hop cannot be served twice within one slot
        for i in range(base.num_users):
            l = base.distances[i]
            last_hop = cfg.path_lens[i]
            for j in range(1, last_hop + 1):
                node = cfg.routes[i][j - 1] - 1
                c = base.channel_states[self.channel_idx[i][node]]
                q = self.queues[i][j - 1]
                v = allocs[i][j - 1]
                node_res[node] += float(v @ q)
                for tau in range(len(q)):
                    m = int(q[tau])
                    if m == 0:
                        continue
                    p = success_prob(v[tau], c, l)
                    succ = int(np.count_nonzero(self.rng.random(m) < p))
                    fail = m - succ
                    if j == last_hop:
                        served[i] += succ
                    elif tau >= 1:
                        new_queues[i][j][tau - 1] += succ
                    else:
                        expired[i] += succ  # cannot reach destination in time
                    if fail:
                        if tau == 0:
                            expired[i] += fail
                        else:
                            new_queues[i][j - 1][tau - 1] += fail
        self.queues = new_queues

        trans = base.channel_transition
        for i in range(base.num_users):
            for k in range(cfg.num_nodes):
                cum = np.cumsum(trans[self.channel_idx[i][k]])
                nxt = int(np.searchsorted(cum, self.rng.random(), side="right"))
                self.channel_idx[i][k] = min(nxt, len(cum) - 1)

        self.t += 1
        terminal = self.t >= base.episode_len
        self._apply_arrivals()

        throughput = float(np.dot(base.weights, served))
        return StepOutcome(
            served=served,
            throughput_D=throughput,
            resource_E=float(node_res.sum()),
            next_obs=self.observe(),
            expired=expired,
            clipped=n_clipped,
            terminal=terminal,
            node_resource=node_res,
            jobs_before=jobs_before,
        )
