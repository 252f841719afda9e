"""Poisson subsampling masks and per-example clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sized

import numpy as np
import numpy.typing as npt

from .core import DimensionError, Vector


@dataclass(frozen=True)
class PoissonMask:
    indicators: npt.NDArray[np.bool_]

    @property
    def sampled_indices(self) -> npt.NDArray[np.intp]:
        return np.flatnonzero(self.indicators)

    @property
    def size(self) -> int:
        return int(self.indicators.sum())

    def __len__(self) -> int:
        return len(self.indicators)


@dataclass(frozen=True)
class DatasetHandle:
    """Training set together with its sampling rate.

    ``lot_size`` is the expected lot size ``N * q`` (a real number, not the
    realised batch size).
    """

    data: Sized
    q: float
    lot_size: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lot_size", len(self.data) * self.q)

    @property
    def N(self) -> int:
        return len(self.data)


def draw_mask(stream: np.random.Generator, n: int, q: float) -> PoissonMask:
    """Independent Bernoulli(q) indicator per example (``U < q``)."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return PoissonMask(stream.random(n) < q)


def _row_norms(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", g, g))


def clip_rows(grads: np.ndarray, clip_c: float) -> np.ndarray:
    """Clip each row of ``grads`` to l2 norm at most ``clip_c``."""
    if clip_c <= 0:
        raise ValueError(f"clip_c must be > 0, got {clip_c}")
    grads = np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient passed to clip")
    scale = np.maximum(1.0, _row_norms(grads) / clip_c)
    return grads / scale[:, None]


def clip(g: Vector, clip_c: float) -> Vector:
    """``g / max(1, ||g|| / C)``."""
    return clip_rows(np.asarray(g, dtype=np.float64)[None, :], clip_c)[0]


def clipped_sum(grads: np.ndarray, clip_c: float) -> Vector:
    """Sum of clipped rows, accumulated in ascending row order.

    ``grads`` has shape ``(|S_t|, d)`` with rows ordered by example index; an
    empty batch (shape ``(0, d)``) gives the zero vector.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2:
        raise DimensionError(f"expected a 2-D array of per-example gradients, got ndim={grads.ndim}")
    clipped = clip_rows(grads, clip_c)
    total = np.zeros(grads.shape[1])
    for row in clipped:
        total += row
    return total


def masked_clipped_sum(
    mask: PoissonMask,
    grad_fn: Callable[[npt.NDArray[np.intp]], np.ndarray],
    dim: int,
    clip_c: float,
) -> Vector:
    """Clipped sum over the sampled set; ``grad_fn(indices)`` returns rows."""
    idx = mask.sampled_indices
    if idx.size == 0:
        return np.zeros(dim)
    grads = grad_fn(idx)
    if grads.shape != (idx.size, dim):
        raise DimensionError(f"gradient block has shape {grads.shape}, expected {(idx.size, dim)}")
    return clipped_sum(grads, clip_c)
