"""Twin state-action value networks fit to Monte-Carlo discounted returns.

The training target for (s_t, a_t) is the in-trajectory discounted
return G_t = sum_{i>=t} gamma^{i-t} r_i, computed by backward recursion,
so no actions ever need to be generated during critic training
(sampling-free).  The loss regresses the elementwise minimum of the two
networks onto G_t; gradients flow only through the network achieving the
minimum (subgradient of min).  Target copies are soft-updated each step
for interface parity with TD-style training, but the Monte-Carlo loss
does not read them; a TD loss using them is provided for contrast only.
"""

from __future__ import annotations

import numpy as np

from .nn import Adam, DenseNet


def mc_returns(rewards, gamma: float) -> np.ndarray:
    """Per-step discounted returns, G_t = r_t + gamma * G_{t+1}."""
    rewards = np.asarray(rewards, dtype=float)
    G = np.zeros_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        G[t] = acc
    return G


class CriticPair:
    """Double-Q critic: Q1, Q2 over [state | action] with soft-updated targets."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden=(256, 256),
        gamma: float = 0.8,
        rho: float = 0.05,
        seed: int = 0,
    ):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        rng = np.random.default_rng(seed)
        sizes = [state_dim + action_dim, *hidden, 1]
        acts = ["relu"] * len(hidden) + ["identity"]
        self.q1 = DenseNet(sizes, acts, rng=rng)
        self.q2 = DenseNet(sizes, acts, rng=rng)
        self.target1 = self.q1.copy()
        self.target2 = self.q2.copy()
        self.gamma = gamma
        self.rho = rho

    @staticmethod
    def _join(states, actions):
        return np.concatenate(
            [np.atleast_2d(np.asarray(states, dtype=float)),
             np.atleast_2d(np.asarray(actions, dtype=float))],
            axis=1,
        )

    def q_value(self, states, actions) -> np.ndarray:
        """min(Q1, Q2) of the online networks; shape (B,)."""
        x = self._join(states, actions)
        return np.minimum(self.q1.forward(x).ravel(), self.q2.forward(x).ravel())

    def target_q(self, states, actions) -> np.ndarray:
        x = self._join(states, actions)
        return np.minimum(self.target1.forward(x).ravel(), self.target2.forward(x).ravel())

    def loss_and_grads(self, states, actions, returns):
        """MSE of min(Q1,Q2) against returns; grads routed through the argmin."""
        returns = np.asarray(returns, dtype=float).ravel()
        if returns.size == 0:
            raise ValueError("empty batch")
        x = self._join(states, actions)
        y1 = self.q1.forward(x).ravel()
        y2 = self.q2.forward(x).ravel()
        take1 = y1 <= y2
        m = np.where(take1, y1, y2)
        resid = m - returns
        loss = float(np.mean(resid ** 2))
        B = returns.size
        d1 = (2.0 * resid * take1 / B)[:, None]
        d2 = (2.0 * resid * ~take1 / B)[:, None]
        g1 = self.q1.grads_as_list(*self.q1.backward(d1)[:2])
        g2 = self.q2.grads_as_list(*self.q2.backward(d2)[:2])
        return loss, g1, g2

    def soft_update(self, rho: float | None = None):
        """target <- rho * online + (1 - rho) * target."""
        rho = self.rho if rho is None else rho
        if not 0.0 < rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        for online, target in ((self.q1, self.target1), (self.q2, self.target2)):
            for p, tp in zip(online.parameters(), target.parameters()):
                tp *= 1.0 - rho
                tp += rho * p

    def td_loss_and_grads(self, states, actions, rewards, next_states, next_actions):
        """TD loss against the soft targets (Bellman residual form).

        Kept only as a documented contrast: it needs fresh next-state
        actions, which is exactly what the Monte-Carlo objective avoids.
        Not used by the training loop.
        """
        rewards = np.asarray(rewards, dtype=float).ravel()
        boot = self.target_q(next_states, next_actions)
        target = rewards + self.gamma * boot
        x = self._join(states, actions)
        y1 = self.q1.forward(x).ravel()
        y2 = self.q2.forward(x).ravel()
        B = rewards.size
        loss = float(np.mean((y1 - target) ** 2 + (y2 - target) ** 2) / 2)
        d1 = ((y1 - target) / B)[:, None]
        d2 = ((y2 - target) / B)[:, None]
        g1 = self.q1.grads_as_list(*self.q1.backward(d1)[:2])
        g2 = self.q2.grads_as_list(*self.q2.backward(d2)[:2])
        return loss, g1, g2


def train_critic(
    pair: CriticPair,
    states: np.ndarray,
    actions: np.ndarray,
    returns: np.ndarray,
    steps: int,
    lr: float = 3e-4,
    batch_size: int = 256,
    seed: int = 0,
) -> list[float]:
    """Fit the pair to (s, a, G) tuples; soft-updates targets every step."""
    rng = np.random.default_rng(seed)
    opt1 = Adam(pair.q1.parameters(), lr=lr)
    opt2 = Adam(pair.q2.parameters(), lr=lr)
    n = states.shape[0]
    losses = []
    for _ in range(steps):
        idx = rng.integers(0, n, size=min(batch_size, n))
        loss, g1, g2 = pair.loss_and_grads(states[idx], actions[idx], returns[idx])
        opt1.step(pair.q1.parameters(), g1)
        opt2.step(pair.q2.parameters(), g2)
        pair.soft_update()
        losses.append(loss)
    return losses
