"""Recursive private release loop and the post-processing baseline.

One step of the query-level mechanism::

    mask -> per-example grads at theta_t -> clip -> sum s_t
         -> memory u from the buffered releases (zero when K_t = 1)
         -> r_t = beta * s_t + (1 - beta) * u
         -> release = r_t + N(0, sigma^2 C^2 I)
         -> theta_{t+1} = theta_t - eta * release / L
         -> push release into the buffer and advance the EMA trend

The ``current_only`` variant releases ``s_t + noise`` (ordinary DP-SGD).
``post_fm_step`` instead releases ``s_t + noise`` and applies the memory rule
to the gradient-level releases afterwards.

Query values, clipped sums and noise draws are only kept on the step records
when ``retain_debug=True``; they must not leave a production run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import (
    DimensionError,
    MechanismConfig,
    MemoryVariant,
    PrivacyConfig,
    Rng,
    Vector,
    gaussian_vector,
)
from .kernel import KernelWeights, ReleaseBuffer, ema_update, kernel_weights, memory_state
from .sampling import DatasetHandle, draw_mask, masked_clipped_sum

# grad_fn(theta, sorted example indices) -> per-example gradient rows
GradFn = Callable[[Vector, np.ndarray], np.ndarray]

ALGORITHMS = ("fo_dp_sgd", "dp_sgd", "post_fm", "uniform_mem", "exponential_mem")


@dataclass
class StepRecord:
    step: int
    batch_size: int
    release: Vector
    noisy_grad: Vector
    weights: np.ndarray | None = None
    query: Vector | None = None
    clipped_sum: Vector | None = None
    noise: Vector | None = None


@dataclass
class Transcript:
    algorithm: str
    seed: int
    mechanism: MechanismConfig
    privacy: PrivacyConfig
    records: list[StepRecord] = field(default_factory=list)

    @property
    def releases(self) -> list[Vector]:
        return [r.release for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class TrainState:
    theta: Vector
    buffer: ReleaseBuffer

    @property
    def step(self) -> int:
        return self.buffer.step

    @classmethod
    def initial(cls, theta: Vector, memory_window: int) -> "TrainState":
        return cls(np.asarray(theta, dtype=np.float64).copy(), ReleaseBuffer.empty(memory_window))


def recursive_query(s: Vector, u: Vector, beta: float) -> Vector:
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if s.shape != u.shape:
        raise DimensionError(f"query operands {s.shape} vs {u.shape}")
    return beta * s + (1.0 - beta) * u


def release(r: Vector, sigma: float, clip_c: float, stream: np.random.Generator) -> tuple[Vector, Vector]:
    """Return ``(r + Z, Z)`` with ``Z ~ N(0, (sigma C)^2 I)``."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    z = gaussian_vector(stream, r.shape[0], sigma * clip_c)
    return r + z, z


def sgd_update(theta: Vector, direction: Vector, eta: float, lot_size: float) -> Vector:
    """``theta - eta * direction / L``."""
    if lot_size <= 0:
        raise ValueError(f"lot size must be > 0, got {lot_size}")
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    if theta.shape != direction.shape:
        raise DimensionError(f"theta {theta.shape} vs direction {direction.shape}")
    return theta - eta * (direction / lot_size)


def _memory(buffer: ReleaseBuffer, cfg: MechanismConfig, dim: int) -> tuple[Vector, KernelWeights | None]:
    k_t = min(cfg.memory_window, buffer.step + 1)
    if k_t < 2 or cfg.memory_variant is MemoryVariant.CURRENT_ONLY:
        return np.zeros(dim), None
    w = kernel_weights(buffer, cfg)
    return memory_state(buffer, w, dim), w


def fo_dp_sgd_step(
    state: TrainState,
    data: DatasetHandle,
    grad_fn: GradFn,
    mech: MechanismConfig,
    priv: PrivacyConfig,
    eta: float,
    rng: Rng,
    retain_debug: bool = False,
) -> tuple[TrainState, StepRecord]:
    """One step of the query-level mechanism for ``mech.memory_variant``."""
    dim = state.theta.shape[0]
    mask = draw_mask(rng.stream("mask"), data.N, priv.q)
    s = masked_clipped_sum(mask, lambda idx: grad_fn(state.theta, idx), dim, priv.clip_c)

    if mech.memory_variant is MemoryVariant.CURRENT_ONLY:
        r, w = s, None
    else:
        u, w = _memory(state.buffer, mech, dim)
        r = recursive_query(s, u, mech.beta)

    s_tilde, z = release(r, priv.sigma, priv.clip_c, rng.stream("noise"))
    theta = sgd_update(state.theta, s_tilde, eta, data.lot_size)
    buffer = ema_update(state.buffer, s_tilde, mech.gamma)

    rec = StepRecord(
        step=state.step,
        batch_size=mask.size,
        release=s_tilde,
        noisy_grad=s_tilde / data.lot_size,
        weights=None if w is None else w.weights,
    )
    if retain_debug:
        rec.query, rec.clipped_sum, rec.noise = r, s, z
    return TrainState(theta, buffer), rec


def post_fm_step(
    state: TrainState,
    data: DatasetHandle,
    grad_fn: GradFn,
    mech: MechanismConfig,
    priv: PrivacyConfig,
    eta_post: float,
    rng: Rng,
    retain_debug: bool = False,
) -> tuple[TrainState, StepRecord]:
    """Standard release first, then memory over past noisy gradients.

    ``state.buffer`` holds gradient-level releases ``(s_t + Z_t) / L`` and
    their own EMA trend; the lag weights follow ``mech`` exactly as in the
    query-level mechanism.
    """
    dim = state.theta.shape[0]
    mask = draw_mask(rng.stream("mask"), data.N, priv.q)
    s = masked_clipped_sum(mask, lambda idx: grad_fn(state.theta, idx), dim, priv.clip_c)
    s_tilde, z = release(s, priv.sigma, priv.clip_c, rng.stream("noise"))
    g_std = s_tilde / data.lot_size

    u, w = _memory(state.buffer, mech, dim)
    v = recursive_query(g_std, u, mech.beta)
    if eta_post < 0:
        raise ValueError(f"eta_post must be >= 0, got {eta_post}")
    theta = state.theta - eta_post * v
    buffer = ema_update(state.buffer, g_std, mech.gamma)

    rec = StepRecord(
        step=state.step,
        batch_size=mask.size,
        release=s_tilde,
        noisy_grad=v,
        weights=None if w is None else w.weights,
    )
    if retain_debug:
        rec.query, rec.clipped_sum, rec.noise = s, s, z
    return TrainState(theta, buffer), rec


def mechanism_for(algorithm: str, mech: MechanismConfig) -> MechanismConfig:
    """Mechanism config actually used by ``algorithm``."""
    variants = {
        "fo_dp_sgd": MemoryVariant.FRACTIONAL_CA,
        "dp_sgd": MemoryVariant.CURRENT_ONLY,
        "uniform_mem": MemoryVariant.UNIFORM,
        "exponential_mem": MemoryVariant.EXPONENTIAL,
        "post_fm": MemoryVariant.FRACTIONAL_CA,
    }
    if algorithm not in variants:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    return replace(mech, memory_variant=variants[algorithm])


def noise_ratio(algorithm: str, mech: MechanismConfig, priv: PrivacyConfig) -> float:
    """Noise-to-sensitivity ratio charged by the accountant for one step.

    Query-level memory variants have sensitivity ``beta C`` and are charged
    ``sigma / beta``; DP-SGD and the post-processing baseline are charged
    ``sigma``.
    """
    if algorithm in ("dp_sgd", "post_fm"):
        return priv.sigma
    mechanism_for(algorithm, mech)  # validates the name
    return priv.sigma / mech.beta


def run_mechanism(
    algorithm: str,
    theta0: Vector,
    data: DatasetHandle,
    grad_fn: GradFn,
    mech: MechanismConfig,
    priv: PrivacyConfig,
    eta: float,
    steps: int,
    rng: Rng,
    retain_debug: bool = False,
    eta_post: float | None = None,
    on_step: Callable[[TrainState, StepRecord], None] | None = None,
) -> tuple[TrainState, Transcript]:
    """Run ``steps`` consecutive steps of ``algorithm`` from ``theta0``."""
    cfg = mechanism_for(algorithm, mech)
    state = TrainState.initial(theta0, cfg.memory_window)
    transcript = Transcript(algorithm, rng.seed, cfg, priv)
    for _ in range(steps):
        if algorithm == "post_fm":
            state, rec = post_fm_step(
                state, data, grad_fn, cfg, priv, eta if eta_post is None else eta_post, rng, retain_debug
            )
        else:
            state, rec = fo_dp_sgd_step(state, data, grad_fn, cfg, priv, eta, rng, retain_debug)
        transcript.records.append(rec)
        if on_step is not None:
            on_step(state, rec)
    return state, transcript
