"""Fully connected tanh classifier with hand-written per-example backprop.

Parameters live in one flat vector laid out as ``W1, b1, W2, b2, W3, b3``
(row-major), where ``W_k`` has shape ``(fan_in, fan_out)`` and a forward pass
computes ``x @ W1 + b1``. Loss is softmax cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, Vector


@dataclass(frozen=True)
class Mlp:
    in_dim: int
    num_classes: int
    hidden: tuple[int, ...] = (64, 32)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.num_classes)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        out: list[tuple[int, ...]] = []
        sizes = self.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            out += [(fan_in, fan_out), (fan_out,)]
        return out

    @property
    def dim(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)

    def unflatten(self, theta: Vector) -> list[np.ndarray]:
        """Views into ``theta``: ``[W1, b1, W2, b2, ...]``."""
        theta = np.asarray(theta)
        if theta.shape != (self.dim,):
            raise DimensionError(f"parameter vector has shape {theta.shape}, expected ({self.dim},)")
        parts, offset = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            parts.append(theta[offset : offset + size].reshape(shape))
            offset += size
        return parts

    def flatten(self, parts: list[np.ndarray]) -> Vector:
        if [p.shape for p in parts] != self.shapes:
            raise DimensionError("parameter blocks do not match the layer shapes")
        return np.concatenate([np.ravel(p) for p in parts]).astype(np.float64)

    def init_params(self, stream: np.random.Generator) -> Vector:
        """Uniform(-a, a) with a = sqrt(1 / fan_in) for weights and biases of each layer."""
        parts = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            a = np.sqrt(1.0 / fan_in)
            parts.append(stream.uniform(-a, a, size=(fan_in, fan_out)))
            parts.append(stream.uniform(-a, a, size=(fan_out,)))
        return self.flatten(parts)

    def forward(self, theta: Vector, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Logits for a single example or a batch of rows, plus layer inputs.

        The cache holds the input to every dense layer (``x``, then each tanh
        output), which is what backprop needs.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"feature dimension {x.shape[-1]} != in_dim {self.in_dim}")
        parts = self.unflatten(theta)
        acts = [x]
        h = x
        n_layers = len(parts) // 2
        for k in range(n_layers):
            z = h @ parts[2 * k] + parts[2 * k + 1]
            if k < n_layers - 1:
                h = np.tanh(z)
                acts.append(h)
            else:
                h = z
        return h, acts

    def loss(self, theta: Vector, x: np.ndarray, label: int) -> float:
        logits, _ = self.forward(theta, x)
        return float(_logsumexp(logits) - logits[label])

    def batch_grads(self, theta: Vector, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-example gradients, one flat row per example: shape ``(n, dim)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.intp).reshape(-1)
        n = X.shape[0]
        parts = self.unflatten(theta)
        logits, acts = self.forward(theta, X)
        p = _softmax(logits)
        delta = p
        delta[np.arange(n), y] -= 1.0

        n_layers = len(parts) // 2
        blocks: list[np.ndarray] = [None] * len(parts)  # type: ignore[list-item]
        for k in range(n_layers - 1, -1, -1):
            h_in = acts[k]
            blocks[2 * k] = np.einsum("ni,nj->nij", h_in, delta).reshape(n, -1)
            blocks[2 * k + 1] = delta
            if k > 0:
                delta = (delta @ parts[2 * k].T) * (1.0 - h_in * h_in)
        return np.concatenate(blocks, axis=1)

    def per_example_grad(self, theta: Vector, x: np.ndarray, label: int) -> Vector:
        return self.batch_grads(theta, np.asarray(x)[None, :], np.array([label]))[0]

    def evaluate(self, theta: Vector, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
        """Return ``(accuracy, mean cross-entropy)``; argmax ties go to the lowest class."""
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            raise ValueError("cannot evaluate on an empty dataset")
        y = np.asarray(y, dtype=np.intp)
        logits, _ = self.forward(theta, X)
        acc = float(np.mean(np.argmax(logits, axis=1) == y))
        losses = _logsumexp(logits) - logits[np.arange(len(y)), y]
        return acc, float(np.mean(losses))


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = np.max(z, axis=-1, keepdims=True)
    return (m + np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True)))[..., 0]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
