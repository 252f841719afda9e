"""DP-SGD with a recursive, fractional-order memory over past private releases."""

from __future__ import annotations

from .accountant import Accountant, epsilon_for, rdp_subsampled_gaussian, to_eps_delta
from .core import ConfigError, DimensionError, MechanismConfig, MemoryVariant, PrivacyConfig, Rng
from .mechanism import ALGORITHMS, run_mechanism

__all__ = [
    "ALGORITHMS",
    "Accountant",
    "ConfigError",
    "DimensionError",
    "MechanismConfig",
    "MemoryVariant",
    "PrivacyConfig",
    "Rng",
    "epsilon_for",
    "rdp_subsampled_gaussian",
    "run_mechanism",
    "to_eps_delta",
]

__version__ = "0.1.0"
