"""Minimal dense networks with hand-derived reverse-mode gradients.

No autodiff dependency on purpose: the finite-difference test in the
acceptance suite checks these gradients against an independent oracle.
All math is float64.  Batched convention: inputs are (B, d_in).
"""

from __future__ import annotations

import copy
import json

import numpy as np

ACTIVATIONS = ("relu", "silu", "identity")


def _sigmoid(z):
    # stable in both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "silu":
        return z * _sigmoid(z)
    return z


def _dact(name, z):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "silu":
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    return np.ones_like(z)


class DenseNet:
    """Plain MLP: affine + activation per layer, caching for backward."""

    def __init__(self, sizes, activations, rng=None):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        elif isinstance(rng, int):
            rng = np.random.default_rng(rng)
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.W = []
        self.b = []
        for d_in, d_out in zip(sizes[:-1], sizes[1:]):
            # He-style scaling keeps activations well-ranged for relu/silu
            self.W.append(rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in))
            self.b.append(np.zeros(d_out))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input dim {self.sizes[0]}, got {x.shape[1]}")
        zs, hs = [], [x]
        h = x
        for W, b, act in zip(self.W, self.b, self.activations):
            z = h @ W + b
            h = _act(act, z)
            zs.append(z)
            hs.append(h)
        self._cache = (hs, zs)
        return h

    def backward(self, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. params and input.

        Returns (dWs, dbs, dx).  Requires a preceding forward call.
        """
        if self._cache is None:
            raise RuntimeError("forward must be called before backward")
        hs, zs = self._cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if g.shape != hs[-1].shape:
            raise ValueError(f"grad_out shape {g.shape} != output shape {hs[-1].shape}")
        dWs = [None] * len(self.W)
        dbs = [None] * len(self.b)
        for li in range(len(self.W) - 1, -1, -1):
            dz = g * _dact(self.activations[li], zs[li])
            dWs[li] = hs[li].T @ dz
            dbs[li] = dz.sum(axis=0)
            g = dz @ self.W[li].T
        return dWs, dbs, g

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.W, self.b):
            out.append(W)
            out.append(b)
        return out

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def grads_as_list(self, dWs, dbs) -> list[np.ndarray]:
        out = []
        for dW, db in zip(dWs, dbs):
            out.append(dW)
            out.append(db)
        return out

    def copy(self) -> "DenseNet":
        return copy.deepcopy(self)

    def check_finite(self):
        for p in self.parameters():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("non-finite parameter detected")


class Adam:
    """Adaptive-moment optimizer with bias correction; updates in place."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("NaN/Inf gradient passed to Adam")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class FourierTimeEmbedding:
    """Gaussian Fourier projection of a scalar time into sin/cos features.

    Frequencies are drawn once at init and never trained, so the map is
    fixed for the lifetime of a model.  Output dim = num_features
    (half sin, half cos); squared norm is num_features/2 for every t.
    """

    def __init__(self, num_features: int = 32, scale: float = 30.0, seed: int = 0):
        if num_features % 2 != 0:
            raise ValueError("num_features must be even")
        self.num_features = num_features
        self.scale = scale
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.freqs = rng.standard_normal(num_features // 2) * scale

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ang = 2.0 * np.pi * np.outer(t, self.freqs)
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


MAGIC = "socd-net-v1"


def save_net(net: DenseNet, path: str):
    """Versioned JSON header line + flat little-endian float64 parameters."""
    header = {
        "format": MAGIC,
        "sizes": net.sizes,
        "activations": net.activations,
    }
    flat = net.flat_parameters().astype("<f8")
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(flat.tobytes())


def load_net(path: str) -> DenseNet:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC} checkpoint")
        flat = np.frombuffer(f.read(), dtype="<f8").astype(float)
    net = DenseNet(header["sizes"], header["activations"], rng=0)
    pos = 0
    for i, (W, b) in enumerate(zip(net.W, net.b)):
        net.W[i] = flat[pos : pos + W.size].reshape(W.shape).copy()
        pos += W.size
        net.b[i] = flat[pos : pos + b.size].copy()
        pos += b.size
    if pos != flat.size:
        raise ValueError(f"{path}: parameter count mismatch")
    return net
