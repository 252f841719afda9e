"""Central finite differences of the loss in 40-digit arithmetic."""

from __future__ import annotations

import mpmath as mp
import numpy as np

from fodp.model import Mlp


def _loss(model: Mlp, theta, x, label: int):
    parts = model.unflatten(theta)
    h = [mp.mpf(float(v)) for v in x]
    n = len(parts) // 2
    for k in range(n):
        W, b = parts[2 * k], parts[2 * k + 1]
        z = [mp.fsum(h[i] * W[i, j] for i in range(len(h))) + b[j] for j in range(W.shape[1])]
        h = [mp.tanh(v) for v in z] if k < n - 1 else z
    return mp.log(mp.fsum(mp.e**v for v in h)) - h[label]


def fd_gradient(model: Mlp, theta: np.ndarray, x: np.ndarray, label: int, step: str = "1e-12") -> np.ndarray:
    with mp.workdps(40):
        th = np.array([mp.mpf(float(v)) for v in theta], dtype=object)
        h = mp.mpf(step)
        out = np.empty(model.dim)
        for i in range(model.dim):
            a, b = th.copy(), th.copy()
            a[i] += h
            b[i] -= h
            out[i] = float((_loss(model, a, x, label) - _loss(model, b, x, label)) / (2 * h))
    return out


def random_case(seed: int):
    rng = np.random.default_rng(seed)
    in_dim, c = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    model = Mlp(in_dim, c, hidden=(int(rng.integers(2, 5)), int(rng.integers(2, 4))))
    return model, rng.standard_normal(model.dim), rng.standard_normal(in_dim), int(rng.integers(0, c))


def max_relative_error(seed: int) -> float:
    model, theta, x, label = random_case(seed)
    g = model.per_example_grad(theta, x, label)
    fd = fd_gradient(model, theta, x, label)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(g)), np.finfo(float).tiny)
    return float(np.max(np.abs(fd - g) / denom))
