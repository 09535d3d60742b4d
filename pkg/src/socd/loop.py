"""Training and action-generation orchestration.

Action generation: sample K candidate actions from the diffusion policy,
score each with the twin-min critic, and either softmax-weight them
(importance sampling, temperature alpha) or take the argmax.

Training: fit the diffusion behavior-cloning model once, then iterate
the Lagrange multiplier: relabel rewards with the current lambda, fit a
fresh critic pair to Monte-Carlo returns, estimate the policy's average
resource consumption purely from dataset states, and step

    lambda <- max(0, lambda - alpha_lam * (E_0 - E_hat)).

The BC model is shared across all iterations (its checkpoint hash is
recorded each iteration so the invariant is checkable).

User-level decomposition (single-hop): the joint MDP splits into N
sub-MDPs with state [i/N, A_i, Q_i, c_i] and per-user reward
omega_i u_i - lambda v_i . Q_i; one shared model serves every user.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, ObsLayout, single_hop_layout
from .critic import CriticPair, mc_returns, train_critic
from .dataset import OfflineDataset, dataset_config
from .diffusion import DiffusionSchedule, ScoreModel, sample_actions, train_bc


# -- selection ---------------------------------------------------------------

@dataclass
class SelectionConfig:
    mode: str = "argmax"            # "argmax" | "softmax"
    temperature: float = 100.0      # softmax temperature alpha
    num_samples: int = 64           # K candidate actions per state
    solver_steps: int = 10

    def __post_init__(self):
        if self.mode not in ("argmax", "softmax"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.mode == "softmax" and self.temperature <= 0:
            raise ValueError("temperature must be > 0 in softmax mode")


def softmax_weights(q_values: np.ndarray, temperature: float) -> np.ndarray:
    """exp(alpha q_k) / sum, computed with the max shifted out for stability."""
    q = np.asarray(q_values, dtype=float)
    z = np.exp(temperature * (q - q.max(axis=-1, keepdims=True)))
    return z / z.sum(axis=-1, keepdims=True)


def select_actions(
    states: np.ndarray,
    model: ScoreModel,
    critic: CriticPair,
    cfg: SelectionConfig,
    rng,
) -> np.ndarray:
    """Critic-guided action for each state in a batch; shape (M, action_dim)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    M = states.shape[0]
    K = cfg.num_samples
    cand = sample_actions(model, states, K, rng, steps=cfg.solver_steps)  # (M, K, adim)
    flat_states = np.repeat(states, K, axis=0)
    q = critic.q_value(flat_states, cand.reshape(M * K, -1)).reshape(M, K)
    if cfg.mode == "argmax":
        best = q.argmax(axis=1)
        return cand[np.arange(M), best]
    w = softmax_weights(q, cfg.temperature)
    return np.einsum("mk,mka->ma", w, cand)


def select_action(state, model, critic, cfg: SelectionConfig, rng) -> np.ndarray:
    return select_actions(np.atleast_2d(state), model, critic, cfg, rng)[0]


class SOCDPolicy:
    """Trained bundle exposed through the common policy protocol."""

    def __init__(self, model: ScoreModel, critic: CriticPair, cfg: SelectionConfig,
                 decomposer: "Decomposer | None" = None):
        self.model = model
        self.critic = critic
        self.cfg = cfg
        self.decomposer = decomposer

    def act(self, obs, rng) -> np.ndarray:
        if self.decomposer is None:
            return select_action(obs, self.model, self.critic, self.cfg, rng)
        subs = self.decomposer.substates(obs)
        sub_actions = select_actions(subs, self.model, self.critic, self.cfg, rng)
        return self.decomposer.compose(sub_actions)


# -- user-level decomposition ------------------------------------------------

def decompose_state(obs: np.ndarray, i: int, layout: ObsLayout) -> np.ndarray:
    """Per-user sub-state [i/N, A_i, Q_i, c_i] (c_i omitted when partial)."""
    obs = np.asarray(obs, dtype=float)
    n = layout.num_users
    if not 0 <= i < n:
        raise IndexError(f"user index {i} out of range 0..{n - 1}")
    parts = [np.array([i / n]), np.array([obs[layout.arrivals][i]])]
    for sl in layout.user_queue_slices[i]:
        parts.append(obs[sl])
    ci = layout.user_channel_index(i)
    if ci is not None:
        parts.append(np.array([obs[ci]]))
    return np.concatenate(parts)


class Decomposer:
    """Zero-pads heterogeneous per-user blocks to a shared sub-MDP shape.

    Single-hop only: sub-state [i/N, A_i, Q_i padded to tau_max+1, c_i],
    sub-action padded likewise (padding truncated on compose).
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.layout = single_hop_layout(cfg)
        self.tau_max = max(cfg.deadlines)
        self.sub_action_dim = self.tau_max + 1
        self.sub_state_dim = 2 + self.sub_action_dim + (0 if cfg.partial_obs else 1)

    def _pad(self, vec):
        out = np.zeros(self.sub_action_dim)
        out[: len(vec)] = vec
        return out

    def substate(self, obs, i) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        parts = [np.array([i / self.cfg.num_users, obs[self.layout.arrivals][i]]),
                 self._pad(obs[self.layout.user_queue_slices[i][0]])]
        ci = self.layout.user_channel_index(i)
        if ci is not None:
            parts.append(np.array([obs[ci]]))
        return np.concatenate(parts)

    def substates(self, obs) -> np.ndarray:
        return np.array([self.substate(obs, i) for i in range(self.cfg.num_users)])

    def subaction(self, action, i) -> np.ndarray:
        return self._pad(np.asarray(action, dtype=float)[self.layout.user_action_slices[i][0]])

    def compose(self, sub_actions) -> np.ndarray:
        out = np.zeros(self.layout.action_dim)
        for i in range(self.cfg.num_users):
            sl = self.layout.user_action_slices[i][0]
            out[sl] = sub_actions[i][: sl.stop - sl.start]
        return out


# -- Lagrange multiplier iteration -------------------------------------------

@dataclass
class LagrangeState:
    lam: float
    step_size: float
    budget: float
    history: list[tuple[float, float]] = field(default_factory=list)  # (lam, E_hat)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.step_size <= 0:
            raise ValueError("step size must be > 0")


def lagrange_update(state: LagrangeState, e_hat: float) -> LagrangeState:
    """Dual ascent step with projection onto lambda >= 0; history appended."""
    if e_hat < 0:
        raise ValueError("consumption estimate must be >= 0")
    state.history.append((state.lam, float(e_hat)))
    state.lam = max(0.0, state.lam - state.step_size * (state.budget - e_hat))
    return state


def estimate_consumption(
    dataset: OfflineDataset,
    act_batch,
    n: int,
    rng,
    seed: int = 0,
) -> float:
    """Offline consumption estimate E_hat over n sampled trajectories.

    act_batch maps a (M, obs_dim) state matrix to (M, action_dim) actions.
    Each state's consumption sum_i v_i . Q_i is computed against the
    buffer block embedded in the state itself (never the simulator).
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    layout = _layout_for(dataset)
    trajs = dataset.sample_trajectories(n, seed)
    states = np.array([tr.state for traj in trajs for tr in traj])
    actions = np.clip(act_batch(states), 0.0, dataset_config(dataset).base.v_max
                      if dataset.multihop else dataset_config(dataset).v_max)
    counts = states[:, layout.cell_obs_index]
    return float(np.mean(np.sum(actions * counts, axis=1)))


def _layout_for(dataset: OfflineDataset) -> ObsLayout:
    from .config import multi_hop_layout

    cfg = dataset_config(dataset)
    if dataset.multihop:
        return multi_hop_layout(cfg)
    return single_hop_layout(cfg)


# -- full training loop ------------------------------------------------------

@dataclass
class TrainConfig:
    bc_steps: int = 6000
    bc_lr: float = 1e-4
    bc_batch: int = 256
    critic_steps: int = 3000
    critic_lr: float = 3e-4
    critic_batch: int = 256
    k_outer: int = 8
    lam_init: float = 0.5
    lam_step: float = 0.05
    budget: float | None = None     # defaults to the env config's E_0
    est_trajectories: int = 8
    gamma: float = 0.8
    rho: float = 0.05
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    score_hidden: tuple = (128, 64, 64, 64)
    state_embed_dim: int = 56
    time_dim: int = 32
    critic_hidden: tuple = (256, 256)
    decomposed: bool = False
    seed: int = 0
    verbose: bool = False


@dataclass
class TrainResult:
    model: ScoreModel
    critic: CriticPair
    lagrange: LagrangeState
    bc_hashes: list[str]
    bc_losses: list[float]
    decomposer: Decomposer | None = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def policy(self) -> SOCDPolicy:
        return SOCDPolicy(self.model, self.critic, self.selection, self.decomposer)


def train(dataset: OfflineDataset, cfg: TrainConfig,
          model: ScoreModel | None = None) -> TrainResult:
    """Full offline training: one BC fit, then K outer Lagrange iterations.

    Passing a pre-fit `model` skips the BC stage (the behavior clone is
    trained once and reused; callers holding a checkpoint need not pay
    for it again).
    """
    env_cfg = dataset_config(dataset)
    base = env_cfg.base if dataset.multihop else env_cfg
    if cfg.decomposed and dataset.multihop:
        raise ValueError("decomposed mode supports single-hop datasets only")
    budget = base.budget_E0 if cfg.budget is None else cfg.budget

    decomposer = Decomposer(env_cfg) if cfg.decomposed else None
    if cfg.decomposed:
        states, actions, sub = _decomposed_pairs(dataset, decomposer)
    else:
        states = dataset.states()
        actions = dataset.actions()

    bc_losses: list[float] = []
    if model is None:
        model = ScoreModel(
            action_dim=actions.shape[1],
            state_dim=states.shape[1],
            v_max=base.v_max,
            hidden=cfg.score_hidden,
            state_embed_dim=cfg.state_embed_dim,
            time_dim=cfg.time_dim,
            schedule=DiffusionSchedule(),
            seed=cfg.seed,
        )
        if cfg.verbose:
            print(f"training BC model: {cfg.bc_steps} steps on {len(states)} pairs")
        bc_losses = train_bc(model, states, actions, steps=cfg.bc_steps, lr=cfg.bc_lr,
                             batch_size=cfg.bc_batch, seed=cfg.seed,
                             log_every=500 if cfg.verbose else None)

    lag = LagrangeState(lam=cfg.lam_init, step_size=cfg.lam_step, budget=budget)
    bc_hashes = []
    critic = None
    rng = np.random.default_rng(cfg.seed + 17)
    for k in range(cfg.k_outer):
        bc_hashes.append(model.param_hash())
        returns = _relabeled_returns(dataset, lag.lam, cfg.gamma, decomposer)
        critic = CriticPair(
            state_dim=states.shape[1],
            action_dim=actions.shape[1],
            hidden=cfg.critic_hidden,
            gamma=cfg.gamma,
            rho=cfg.rho,
            seed=cfg.seed + 100 + k,   # fresh fit each iteration
        )
        train_critic(critic, states, actions, returns, steps=cfg.critic_steps,
                     lr=cfg.critic_lr, batch_size=cfg.critic_batch, seed=cfg.seed + k)
        e_hat = _estimate(dataset, model, critic, cfg, decomposer, rng, seed=cfg.seed + 31 * k)
        lagrange_update(lag, e_hat)
        if cfg.verbose:
            print(f"outer {k + 1}/{cfg.k_outer}: E_hat={e_hat:.3f}  lambda -> {lag.lam:.4f}")

    return TrainResult(model=model, critic=critic, lagrange=lag,
                       bc_hashes=bc_hashes, bc_losses=bc_losses,
                       decomposer=decomposer, selection=cfg.selection)


def _relabeled_returns(dataset, lam, gamma, decomposer) -> np.ndarray:
    """Per-transition discounted returns under rewards r = D - lambda E.

    In decomposed mode, per-(transition, user) returns from the user-level
    rewards omega_i u_i - lambda v_i . Q_i, flattened user-major within slot.
    """
    J, T = dataset.num_episodes, dataset.slots_per_episode
    if decomposer is None:
        rewards = dataset.relabel(lam).reshape(J, T)
        return np.concatenate([mc_returns(rewards[j], gamma) for j in range(J)])
    weights = np.asarray(decomposer.cfg.weights, dtype=float)
    n = decomposer.cfg.num_users
    out = []
    for j in range(J):
        ep = dataset.episode(j)
        per_user = np.array(
            [weights * tr.served - lam * tr.user_resource for tr in ep]
        )  # (T, N)
        G = np.stack([mc_returns(per_user[:, i], gamma) for i in range(n)], axis=1)
        out.append(G.reshape(-1))  # slot-major, user within slot
    return np.concatenate(out)


def _decomposed_pairs(dataset, decomposer):
    states, actions = [], []
    for tr in dataset.transitions:
        for i in range(decomposer.cfg.num_users):
            states.append(decomposer.substate(tr.state, i))
            actions.append(decomposer.subaction(tr.action, i))
    return np.array(states), np.array(actions), True


def _estimate(dataset, model, critic, cfg, decomposer, rng, seed):
    if decomposer is None:
        def act_batch(S):
            return select_actions(S, model, critic, cfg.selection, rng)
    else:
        def act_batch(S):
            subs = np.concatenate([decomposer.substates(s)[None] for s in S])  # (M, N, d)
            M, n, d = subs.shape
            sub_a = select_actions(subs.reshape(M * n, d), model, critic, cfg.selection, rng)
            return np.array([decomposer.compose(sub_a[m * n:(m + 1) * n]) for m in range(M)])
    return estimate_consumption(dataset, act_batch, n=min(cfg.est_trajectories,
                                                          dataset.num_episodes),
                                rng=rng, seed=seed)
