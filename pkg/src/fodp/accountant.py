"""Renyi DP accounting for the Poisson-subsampled Gaussian mechanism.

For an integer order ``a`` and noise-to-sensitivity ratio ``rho`` the bound is

    eps(a) = log A_a / (a - 1),
    A_a = sum_{k=0}^{a} C(a, k) (1 - q)^(a - k) q^k exp((k^2 - k) / (2 rho^2)),

evaluated as a log-sum-exp. ``q = 1`` returns the unsubsampled Gaussian value
``a / (2 rho^2)`` exactly and ``q = 0`` returns 0.

Conversion to (eps, delta)-DP uses ``min_a eps_tot(a) + log(1/delta) / (a - 1)``
over the order grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ORDERS: tuple[int, ...] = tuple(range(2, 65)) + (128, 256)

# Relative outward rounding applied to the subsampled bound so the float value
# stays an upper bound on the exact expansion.
_ROUND_UP = 1e-12


class GridMismatchError(ValueError):
    pass


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def rdp_subsampled_gaussian(order: float, q: float, rho: float) -> float:
    """Per-step RDP bound at ``order`` for sampling rate ``q`` and ratio ``rho``."""
    if order <= 1:
        raise ValueError(f"Renyi order must be > 1, got {order}")
    if rho <= 0:
        raise ValueError(f"noise-to-sensitivity ratio must be > 0, got {rho}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if q == 0:
        return 0.0
    if q == 1:
        return order / (2.0 * rho**2)
    if float(order) != int(order):
        raise ValueError(f"subsampled bound is implemented for integer orders only, got {order}")
    a = int(order)
    log_q, log_1mq = math.log(q), math.log1p(-q)
    ks = np.arange(a + 1)
    terms = np.array(
        [_log_binom(a, k) + k * log_q + (a - k) * log_1mq + (k * k - k) / (2.0 * rho**2) for k in ks]
    )
    m = terms.max()
    log_a = m + math.log(np.sum(np.exp(terms - m)))
    eps = log_a / (a - 1)
    return max(eps, 0.0) * (1.0 + _ROUND_UP)


def rdp_curve_values(q: float, rho: float, orders=DEFAULT_ORDERS) -> np.ndarray:
    return np.array([rdp_subsampled_gaussian(o, q, rho) for o in orders])


@dataclass
class RdpCurve:
    orders: tuple[float, ...] = DEFAULT_ORDERS
    eps_at_order: np.ndarray = field(default=None)  # type: ignore[assignment]
    steps_composed: int = 0

    def __post_init__(self) -> None:
        self.orders = tuple(self.orders)
        if not self.orders:
            raise ValueError("order grid is empty")
        if any(o <= 1 for o in self.orders) or any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ValueError("orders must be strictly increasing and > 1")
        if self.eps_at_order is None:
            self.eps_at_order = np.zeros(len(self.orders))
        self.eps_at_order = np.asarray(self.eps_at_order, dtype=np.float64)

    def copy(self) -> "RdpCurve":
        return RdpCurve(self.orders, self.eps_at_order.copy(), self.steps_composed)


def compose(curve: RdpCurve, per_step: np.ndarray, steps: int) -> RdpCurve:
    """New curve with ``steps`` more copies of ``per_step`` added at every order."""
    per_step = np.asarray(per_step, dtype=np.float64)
    if per_step.shape != (len(curve.orders),):
        raise GridMismatchError(f"per-step values {per_step.shape} do not match {len(curve.orders)} orders")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return RdpCurve(curve.orders, curve.eps_at_order + steps * per_step, curve.steps_composed + steps)


def to_eps_delta(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """``(epsilon, best_order)`` for the given ``delta``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    orders = np.asarray(curve.orders, dtype=np.float64)
    if orders.size == 0:
        raise ValueError("order grid is empty")
    eps = curve.eps_at_order + math.log(1.0 / delta) / (orders - 1.0)
    i = int(np.argmin(eps))
    return float(eps[i]), float(orders[i])


class Accountant:
    """Running accountant: charge steps, read off epsilon."""

    def __init__(self, delta: float, orders=DEFAULT_ORDERS):
        self.delta = delta
        self.curve = RdpCurve(orders)
        self._cache: dict[tuple[float, float], np.ndarray] = {}

    def step(self, q: float, rho: float, steps: int = 1) -> None:
        key = (q, rho)
        if key not in self._cache:
            self._cache[key] = rdp_curve_values(q, rho, self.curve.orders)
        self.curve = compose(self.curve, self._cache[key], steps)

    @property
    def epsilon(self) -> float:
        """Accumulated epsilon; 0 before any step has touched the data."""
        if self.curve.steps_composed == 0:
            return 0.0
        return to_eps_delta(self.curve, self.delta)[0]


def epsilon_for(q: float, sigma: float, beta: float, steps: int, delta: float, orders=DEFAULT_ORDERS) -> tuple[float, float]:
    """Homogeneous run: ``(epsilon, best_order)`` for ``steps`` steps at ratio ``sigma / beta``."""
    curve = compose(RdpCurve(orders), rdp_curve_values(q, sigma / beta, orders), steps)
    return to_eps_delta(curve, delta)
