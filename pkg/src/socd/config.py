"""Environment configuration, validation, and observation/action layouts.

A config describes an N-user delay-constrained system: per-user deadlines
tau_i, weights omega_i, Poisson arrival rates, a finite-state Markovian
channel, distances l_i, the per-job resource cap v_max and the average
resource budget E_0.  The multi-hop extension adds K nodes and per-flow
routes (lists of node indices).

The observation is a flat float vector with a fixed, documented layout:

    [ A_1..A_N | Q_1 | ... | Q_N | c-block ]

where Q_i is user i's delay-sensitive queue indexed by remaining lifetime
(ascending, 0..tau_i), and the channel block is omitted when partial_obs.
In the multi-hop case the queue section holds one block per (flow, hop)
pair (hop-major within each flow) and the channel block is flow-major over
nodes.  Actions use the same cell ordering as the queue section.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration (CLI exit code 2)."""


DEFAULT_CHANNEL_STATES = (0.5, 1.0, 2.0)
DEFAULT_CHANNEL_STAY = 0.8


def sticky_transition(n_states: int, stay: float) -> np.ndarray:
    """Symmetric sticky chain: stay with prob `stay`, spread the rest evenly."""
    if not 0.0 < stay <= 1.0:
        raise ConfigError(f"stay probability must be in (0,1], got {stay}")
    if n_states == 1:
        return np.ones((1, 1))
    move = (1.0 - stay) / (n_states - 1)
    mat = np.full((n_states, n_states), move)
    np.fill_diagonal(mat, stay)
    return mat


@dataclass
class EnvConfig:
    """Single-hop environment parameters (also the base of MultiHopConfig)."""

    num_users: int
    deadlines: list[int]
    weights: list[float]
    arrival_rates: list[float]
    channel_states: list[float] = field(default_factory=lambda: list(DEFAULT_CHANNEL_STATES))
    channel_transition: np.ndarray | None = None
    distances: list[float] | None = None
    v_max: float = 2.0
    budget_E0: float = 10.0
    partial_obs: bool = False
    episode_len: int = 100
    seed: int = 0

    def __post_init__(self):
        n = self.num_users
        if n < 1:
            raise ConfigError("num_users must be >= 1")
        if self.distances is None:
            self.distances = [1.0] * n
        for name in ("deadlines", "weights", "arrival_rates", "distances"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise ConfigError(f"{name} must have length {n}, got {len(arr)}")
        if any(tau < 1 for tau in self.deadlines):
            raise ConfigError("deadlines must all be >= 1")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("weights must all be > 0")
        if any(r < 0 for r in self.arrival_rates):
            raise ConfigError("arrival_rates must be nonnegative")
        if any(l <= 0 for l in self.distances):
            raise ConfigError("distances must all be > 0")
        if self.v_max <= 0:
            raise ConfigError("v_max must be > 0")
        if self.budget_E0 < 0:
            raise ConfigError("budget_E0 must be >= 0")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if any(c <= 0 for c in self.channel_states):
            raise ConfigError("channel_states must all be > 0")
        s = len(self.channel_states)
        if self.channel_transition is None:
            self.channel_transition = sticky_transition(s, DEFAULT_CHANNEL_STAY)
        self.channel_transition = np.asarray(self.channel_transition, dtype=float)
        if self.channel_transition.shape != (s, s):
            raise ConfigError(
                f"channel_transition must be {s}x{s}, got {self.channel_transition.shape}"
            )
        if np.any(self.channel_transition < 0):
            raise ConfigError("channel_transition entries must be nonnegative")
        rowsum = self.channel_transition.sum(axis=1)
        if np.max(np.abs(rowsum - 1.0)) > 1e-12:
            raise ConfigError("channel_transition rows must sum to 1 within 1e-12")

    def to_dict(self) -> dict:
        return {
            "num_users": self.num_users,
            "deadlines": list(map(int, self.deadlines)),
            "weights": list(map(float, self.weights)),
            "arrival_rates": list(map(float, self.arrival_rates)),
            "channel_states": list(map(float, self.channel_states)),
            "channel_transition": self.channel_transition.tolist(),
            "distances": list(map(float, self.distances)),
            "v_max": float(self.v_max),
            "budget_E0": float(self.budget_E0),
            "partial_obs": bool(self.partial_obs),
            "episode_len": int(self.episode_len),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        if "channel_transition" in d and d["channel_transition"] is not None:
            d["channel_transition"] = np.asarray(d["channel_transition"], dtype=float)
        return cls(**d)


@dataclass
class MultiHopConfig:
    """Multi-hop extension: K nodes and per-flow routes (node index lists).

    Routes are given as node sequences, e.g. [1, 2, 5] for a 3-hop flow,
    and converted to J x K incidence matrices internally.  Nodes are
    1-indexed in config files, 0-indexed internally.
    """

    base: EnvConfig
    num_nodes: int
    routes: list[list[int]]
    node_budgets: list[float] | None = None

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ConfigError("num_nodes must be >= 1")
        if len(self.routes) != self.base.num_users:
            raise ConfigError("need one route per flow")
        for i, route in enumerate(self.routes):
            if len(route) < 1:
                raise ConfigError(f"route for flow {i} is empty")
            if len(route) > self.base.deadlines[i]:
                raise ConfigError(
                    f"flow {i}: path length {len(route)} exceeds deadline {self.base.deadlines[i]}"
                )
            for node in route:
                if not 1 <= node <= self.num_nodes:
                    raise ConfigError(f"flow {i}: node index {node} out of range 1..{self.num_nodes}")
        if self.node_budgets is None:
            self.node_budgets = [self.base.budget_E0] * self.num_nodes
        if len(self.node_budgets) != self.num_nodes:
            raise ConfigError("node_budgets must have one entry per node")
        if any(b < 0 for b in self.node_budgets):
            raise ConfigError("node_budgets must be nonnegative")

    @property
    def path_lens(self) -> list[int]:
        return [len(r) for r in self.routes]

    @property
    def max_hops(self) -> int:
        return max(self.path_lens)

    def incidence(self, flow: int) -> np.ndarray:
        """J x K 0/1 matrix; row j-1 marks the node serving hop j of `flow`."""
        mat = np.zeros((self.max_hops, self.num_nodes), dtype=int)
        for j, node in enumerate(self.routes[flow]):
            mat[j, node - 1] = 1
        return mat

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "num_nodes": int(self.num_nodes),
            "routes": [list(map(int, r)) for r in self.routes],
            "node_budgets": list(map(float, self.node_budgets)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultiHopConfig":
        return cls(
            base=EnvConfig.from_dict(d["base"]),
            num_nodes=d["num_nodes"],
            routes=d["routes"],
            node_budgets=d.get("node_budgets"),
        )


@dataclass
class ObsLayout:
    """Index map for the flat observation and action vectors.

    queue_slices / action_slices align one-to-one: cell k of the action
    vector allocates resource to the jobs counted in the matching queue
    block at the same lifetime index.  `cell_lifetimes` gives, per flat
    action entry, the remaining lifetime of the jobs it serves;
    `cell_user` the owning user/flow; `cell_node` the node charged
    (always 0 for single-hop).
    """

    num_users: int
    obs_dim: int
    action_dim: int
    arrivals: slice
    queue_slices: list[slice]       # one per (user) or (flow, hop), obs indices
    action_slices: list[slice]      # matching blocks in the action vector
    block_user: list[int]           # owning user/flow per block
    block_node: list[int]           # charged node per block (0-indexed)
    channel_slice: slice | None     # None when partial_obs
    user_queue_slices: list[list[slice]]  # per user, its queue blocks (obs indices)
    user_action_slices: list[list[slice]]
    cell_lifetimes: np.ndarray      # per flat action entry
    cell_user: np.ndarray
    cell_node: np.ndarray
    cell_obs_index: np.ndarray      # obs index of the matching queue count

    def user_channel_index(self, i: int) -> int | None:
        if self.channel_slice is None:
            return None
        return self.channel_slice.start + i


def _build_layout(num_users, partial_obs, blocks, n_channels):
    """blocks: list of (user, node, block_len, max_lifetime)."""
    pos = 0
    arrivals = slice(0, num_users)
    pos = num_users
    queue_slices, action_slices = [], []
    block_user, block_node = [], []
    apos = 0
    lifetimes, cell_user, cell_node, cell_obs = [], [], [], []
    user_q = [[] for _ in range(num_users)]
    user_a = [[] for _ in range(num_users)]
    for user, node, length, _ in blocks:
        qsl = slice(pos, pos + length)
        asl = slice(apos, apos + length)
        queue_slices.append(qsl)
        action_slices.append(asl)
        block_user.append(user)
        block_node.append(node)
        user_q[user].append(qsl)
        user_a[user].append(asl)
        lifetimes.extend(range(length))
        cell_user.extend([user] * length)
        cell_node.extend([node] * length)
        cell_obs.extend(range(pos, pos + length))
        pos += length
        apos += length
    channel_slice = None
    if not partial_obs:
        channel_slice = slice(pos, pos + n_channels)
        pos += n_channels
    return ObsLayout(
        num_users=num_users,
        obs_dim=pos,
        action_dim=apos,
        arrivals=arrivals,
        queue_slices=queue_slices,
        action_slices=action_slices,
        block_user=block_user,
        block_node=block_node,
        channel_slice=channel_slice,
        user_queue_slices=user_q,
        user_action_slices=user_a,
        cell_lifetimes=np.array(lifetimes, dtype=int),
        cell_user=np.array(cell_user, dtype=int),
        cell_node=np.array(cell_node, dtype=int),
        cell_obs_index=np.array(cell_obs, dtype=int),
    )


def single_hop_layout(cfg: EnvConfig) -> ObsLayout:
    blocks = [(i, 0, cfg.deadlines[i] + 1, cfg.deadlines[i]) for i in range(cfg.num_users)]
    return _build_layout(cfg.num_users, cfg.partial_obs, blocks, cfg.num_users)


def multi_hop_layout(cfg: MultiHopConfig) -> ObsLayout:
    base = cfg.base
    blocks = []
    for i in range(base.num_users):
        tau = base.deadlines[i]
        for j in range(1, cfg.path_lens[i] + 1):
            # lifetimes 0..tau-j+1 at hop j
            blocks.append((i, cfg.routes[i][j - 1] - 1, tau - j + 2, tau - j + 1))
    n_channels = base.num_users * cfg.num_nodes
    return _build_layout(base.num_users, base.partial_obs, blocks, n_channels)


def config_hash(cfg_dict: dict) -> str:
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str) -> EnvConfig | MultiHopConfig:
    """Read a YAML config file; `env:` block required, `multihop:` optional."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or "env" not in raw:
        raise ConfigError(f"{path}: expected a top-level 'env' mapping")
    env_raw = dict(raw["env"])
    stay = env_raw.pop("channel_stay", None)
    if stay is not None and "channel_transition" not in env_raw:
        states = env_raw.get("channel_states", list(DEFAULT_CHANNEL_STATES))
        env_raw["channel_transition"] = sticky_transition(len(states), stay)
    try:
        base = EnvConfig.from_dict(env_raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "multihop" in raw and raw["multihop"]:
        mh = raw["multihop"]
        try:
            return MultiHopConfig(
                base=base,
                num_nodes=mh["num_nodes"],
                routes=mh["routes"],
                node_budgets=mh.get("node_budgets"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: bad multihop block: {exc}") from exc
    return base


def poisson_1hop_config(**overrides) -> EnvConfig:
    """The 4-user single-hop reference setup used throughout tests and docs."""
    kwargs = dict(
        num_users=4,
        deadlines=[4, 4, 4, 6],
        weights=[4.0, 2.0, 1.0, 4.0],
        arrival_rates=[3.0, 2.0, 4.0, 2.0],
        budget_E0=10.0,
    )
    kwargs.update(overrides)
    return EnvConfig(**kwargs)
