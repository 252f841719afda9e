"""Memory state built from the private transcript.

The buffer holds the most recent ``K - 1`` private releases (newest first)
together with an EMA trend of all releases so far. Lag weights for the
fractional variant combine a power law in the lag, baseline exponential
tempering, and inconsistency tempering gated by the trend's confidence:

    log a_j = (alpha - 1) log(j + 1) - (lambda + chi * tau * nu_j) * j

normalised to a probability vector over ``j = 1 .. K_t - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, MechanismConfig, MemoryVariant, Vector, vec_norm2


@dataclass(frozen=True)
class ReleaseBuffer:
    """Transcript window seen at the start of step ``step``.

    ``releases[0]`` is the newest release. ``ema`` is the trend that will be
    used at step ``step``; it only involves releases before that step.
    """

    capacity: int
    releases: tuple[Vector, ...] = ()
    ema: Vector | None = None
    step: int = 0

    @classmethod
    def empty(cls, memory_window: int) -> "ReleaseBuffer":
        if memory_window < 1:
            raise ValueError(f"memory_window must be >= 1, got {memory_window}")
        return cls(capacity=memory_window - 1)

    def __len__(self) -> int:
        return len(self.releases)


@dataclass(frozen=True)
class KernelWeights:
    weights: np.ndarray
    raw_log: np.ndarray | None = None
    chi: float = 0.0
    nu: np.ndarray | None = None


def ema_update(buffer: ReleaseBuffer, new_release: Vector, gamma: float) -> ReleaseBuffer:
    """Push ``new_release`` and advance the EMA trend by one step."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    new_release = np.asarray(new_release, dtype=np.float64)
    if buffer.ema is None:
        ema = new_release.copy()
    else:
        if buffer.ema.shape != new_release.shape:
            raise DimensionError(f"release shape {new_release.shape} != trend shape {buffer.ema.shape}")
        ema = gamma * new_release + (1.0 - gamma) * buffer.ema
    releases = ((new_release,) + buffer.releases)[: buffer.capacity]
    return ReleaseBuffer(buffer.capacity, releases, ema, buffer.step + 1)


def inconsistency(release_lag: Vector, ema: Vector, kappa: float, eps_stab: float) -> float:
    """Distance of a lagged release from the trend, relative to the trend norm."""
    if kappa <= 0 or eps_stab <= 0:
        raise ValueError("kappa and eps_stab must be > 0")
    dev = vec_norm2(np.asarray(release_lag) - np.asarray(ema))
    return dev / (max(vec_norm2(ema), kappa) + eps_stab)


def confidence(ema: Vector, zeta: float) -> float:
    """``||ema|| / (||ema|| + zeta)``, in [0, 1)."""
    if zeta <= 0:
        raise ValueError(f"zeta must be > 0, got {zeta}")
    n = vec_norm2(ema)
    return n / (n + zeta)


def raw_log_kernel(
    lags: np.ndarray,
    alpha: float,
    temper_lambda: float,
    chi: float,
    tau: float,
    nu: np.ndarray,
) -> np.ndarray:
    """Log of the unnormalised lag coefficients."""
    lags = np.asarray(lags, dtype=np.float64)
    return (alpha - 1.0) * np.log1p(lags) - (temper_lambda + chi * tau * np.asarray(nu)) * lags


def _normalise_log(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def kernel_weights(buffer: ReleaseBuffer, cfg: MechanismConfig) -> KernelWeights:
    """Normalised lag weights for the ``K_t - 1`` buffered releases.

    Raises ``ValueError`` when ``K_t < 2``; callers use a zero memory state
    in that case.
    """
    n_lags = min(cfg.memory_window, buffer.step + 1) - 1
    if n_lags < 1:
        raise ValueError("K_t < 2: no lagged releases to weight")
    if len(buffer.releases) != n_lags:
        raise ValueError(f"buffer holds {len(buffer.releases)} releases, expected {n_lags}")
    lags = np.arange(1, n_lags + 1, dtype=np.float64)
    variant = cfg.memory_variant

    if variant is MemoryVariant.FRACTIONAL_CA:
        ema = buffer.ema
        chi = confidence(ema, cfg.zeta)
        nu = np.array([inconsistency(r, ema, cfg.kappa, cfg.eps_stab) for r in buffer.releases])
        log_w = raw_log_kernel(lags, cfg.alpha, cfg.temper_lambda, chi, cfg.tau, nu)
        return KernelWeights(_normalise_log(log_w), raw_log=log_w, chi=chi, nu=nu)
    if variant is MemoryVariant.UNIFORM:
        return KernelWeights(np.full(n_lags, 1.0 / n_lags))
    if variant is MemoryVariant.EXPONENTIAL:
        log_w = (lags - 1.0) * np.log(cfg.exp_decay)
        return KernelWeights(_normalise_log(log_w), raw_log=log_w)
    raise ValueError(f"memory variant {variant.value!r} has no lag weights")


def memory_state(buffer: ReleaseBuffer, weights: KernelWeights | None, dim: int) -> Vector:
    """Weighted combination of buffered releases; zero when ``weights`` is None."""
    u = np.zeros(dim)
    if weights is None:
        return u
    if len(weights.weights) != len(buffer.releases):
        raise DimensionError(
            f"{len(weights.weights)} weights for {len(buffer.releases)} buffered releases"
        )
    for w, rel in zip(weights.weights, buffer.releases):
        if rel.shape != (dim,):
            raise DimensionError(f"release shape {rel.shape} != ({dim},)")
        u += w * rel
    return u
