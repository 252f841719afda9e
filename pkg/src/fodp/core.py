"""Shared types, seedable randomness and flat-vector arithmetic.

Every gradient-like quantity in the package (per-example gradients, clipped
sums, queries, releases, memory states) is a flat 1-D ``float64`` numpy array.

Randomness
----------
``Rng`` wraps numpy's Philox-4x64 counter-based bit generator. Each named
substream (``mask``, ``noise``, ``init``, ``data``, or any other label) is an
independent Philox stream keyed by ``SeedSequence(seed, spawn_key=(id,))``,
so drawing from one substream never shifts another. Uniform doubles are
``(next_uint64 >> 11) * 2**-53`` (numpy's documented Philox conversion).

Gaussian draws use the Box-Muller transform on pairs of those uniforms::

    u1 = 1 - U1  in (0, 1],  u2 = U2 in [0, 1)
    z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)

emitted interleaved (z0, z1, z0, z1, ...) and truncated to the requested
length. numpy's own ``standard_normal`` (ziggurat) is deliberately not used
so the transform stays pinned to this description.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

Vector = npt.NDArray[np.float64]

# canonical substream ids; other names hash via crc32
_STREAM_IDS = {"mask": 0, "noise": 1, "init": 2, "data": 3}


class ConfigError(ValueError):
    """A configuration value is outside its legal range."""


class DimensionError(ValueError):
    """Vector operands have mismatched dimensions."""


def _stream_id(name: str) -> int:
    if name in _STREAM_IDS:
        return _STREAM_IDS[name]
    return 1024 + zlib.crc32(name.encode("utf-8"))


class Rng:
    """Master seed with lazily created, independent named substreams.

    ``rng.stream("noise")`` returns the same live generator on every call, so
    consecutive draws advance it. Replaying a substream means building a fresh
    ``Rng`` with the same seed.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(_stream_id(name),))
            gen = np.random.Generator(np.random.Philox(ss))
            self._streams[name] = gen
        return gen

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def uniform(stream: np.random.Generator, n: int) -> Vector:
    """``n`` uniform doubles in [0, 1) from ``stream``."""
    return stream.random(n)


def gaussian_vector(stream: np.random.Generator, d: int, std: float) -> Vector:
    """``d`` i.i.d. N(0, std^2) draws via Box-Muller (see module docstring).

    Draws are consumed even when ``std == 0`` so that the stream position does
    not depend on the noise level.
    """
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    pairs = (d + 1) // 2
    u1 = 1.0 - stream.random(pairs)
    u2 = stream.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    if std == 0:
        return np.zeros(d)
    return std * z[:d]


def _check_same(x: Vector, y: Vector) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")


def vec_axpy(a: float, x: Vector, y: Vector) -> Vector:
    """Return ``a * x + y``."""
    _check_same(x, y)
    return a * x + y


def vec_scale(a: float, x: Vector) -> Vector:
    return a * np.asarray(x, dtype=np.float64)


def vec_norm2(x: Vector) -> float:
    """Euclidean norm."""
    return float(np.sqrt(np.dot(x, x)))


class MemoryVariant(str, enum.Enum):
    FRACTIONAL_CA = "fractional_ca"
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    CURRENT_ONLY = "current_only"


@dataclass(frozen=True)
class MechanismConfig:
    """Hyperparameters of the query-level memory.

    Only ``beta``, ``alpha`` and ``memory_window`` have published defaults;
    ``temper_lambda``, ``tau``, ``gamma``, ``kappa``, ``zeta`` and
    ``eps_stab`` defaults are choices of this package.
    """

    beta: float = 0.90
    alpha: float = 0.80
    memory_window: int = 8
    temper_lambda: float = 0.05
    tau: float = 1.0
    gamma: float = 0.2
    kappa: float = 1e-3
    zeta: float = 1.0
    eps_stab: float = 1e-8
    memory_variant: MemoryVariant = MemoryVariant.FRACTIONAL_CA
    exp_decay: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "memory_variant", MemoryVariant(self.memory_variant))
        _in_half_open("beta", self.beta)
        _in_half_open("alpha", self.alpha)
        _in_half_open("gamma", self.gamma)
        if isinstance(self.memory_window, bool) or int(self.memory_window) != self.memory_window:
            raise ConfigError(f"memory_window must be an integer, got {self.memory_window!r}")
        if self.memory_window < 1:
            raise ConfigError(f"memory_window must be >= 1, got {self.memory_window}")
        object.__setattr__(self, "memory_window", int(self.memory_window))
        for name in ("temper_lambda", "tau"):
            if not (math.isfinite(getattr(self, name)) and getattr(self, name) >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {getattr(self, name)}")
        for name in ("kappa", "zeta", "eps_stab"):
            if not (math.isfinite(getattr(self, name)) and getattr(self, name) > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {getattr(self, name)}")
        if not 0 < self.exp_decay < 1:
            raise ConfigError(f"exp_decay must lie in (0, 1), got {self.exp_decay}")


@dataclass(frozen=True)
class PrivacyConfig:
    clip_c: float = 1.0
    sigma: float = 1.1
    q: float = 0.04
    delta: float = 1e-5
    steps_T: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.clip_c) and self.clip_c > 0):
            raise ConfigError(f"clip_c must be > 0, got {self.clip_c}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        _in_half_open("q", self.q)
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if isinstance(self.steps_T, bool) or int(self.steps_T) != self.steps_T or self.steps_T < 1:
            raise ConfigError(f"steps_T must be a positive integer, got {self.steps_T!r}")
        object.__setattr__(self, "steps_T", int(self.steps_T))


def _in_half_open(name: str, value: float) -> None:
    # (0, 1]
    if not 0 < value <= 1:
        raise ConfigError(f"{name} must lie in (0, 1], got {value}")
