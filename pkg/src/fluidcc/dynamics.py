"""Right-hand sides of the Reno congestion-avoidance fluid model.

The window ``w`` and the rate ``x`` are related by ``x = w / T``.  With a
constant round-trip time ``T`` and the loss probability evaluated at the
delayed rate ``x(t - T)``::

    dw/dt = (1 - p(x_d)) / T   - x_d p(x_d) w / 2
    dx/dt = (1 - p(x_d)) / T^2 - x_d p(x_d) x / 2

At rest (``x_d == x``) the rate satisfies ``x = sqrt(2 (1 - p) / p) / T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .errors import ConfigError, DomainError, NoEquilibrium
from .loss import LossModel

DEFAULT_X0 = 1.0
DEFAULT_HORIZON = 10.0
DEFAULT_STEPS_PER_RTT = 64
MAX_GRID_POINTS = 10**8


@dataclass(frozen=True)
class ModelParams:
    """Inputs of one fluid-model run.

    ``step_dt`` defaults to ``rtt_T / 64``.  The pre-history on ``[-T, 0]``
    is the constant ``initial_rate_x0``.
    """

    loss: LossModel
    rtt_T: float
    initial_rate_x0: float = DEFAULT_X0
    horizon: float = DEFAULT_HORIZON
    step_dt: Optional[float] = field(default=None)

    def __post_init__(self) -> None:
        if not math.isfinite(self.rtt_T) or self.rtt_T <= 0:
            raise ConfigError(f"rtt_T must be > 0, got {self.rtt_T}")
        if self.step_dt is None:
            object.__setattr__(self, "step_dt", self.rtt_T / DEFAULT_STEPS_PER_RTT)
        if not math.isfinite(self.step_dt) or self.step_dt <= 0:
            raise ConfigError(f"step_dt must be > 0, got {self.step_dt}")
        if not math.isfinite(self.horizon) or self.horizon <= self.step_dt:
            raise ConfigError(
                f"horizon must exceed step_dt ({self.step_dt}), got {self.horizon}"
            )
        C = self.loss.capacity_C
        if not 0 < self.initial_rate_x0 <= C:
            raise ConfigError(
                f"initial_rate_x0 must be in (0, C={C}], got {self.initial_rate_x0}"
            )

    @property
    def capacity_C(self) -> float:
        return self.loss.capacity_C

    @property
    def delay_steps(self) -> int:
        """Integer ``k`` with ``rtt_T == k * step_dt``; raises ConfigError otherwise."""
        ratio = self.rtt_T / self.step_dt
        k = round(ratio)
        if abs(ratio - k) > 1e-9 * max(1.0, ratio) or k < 4:
            raise ConfigError(
                f"rtt_T/step_dt must be an integer >= 4, got {ratio:.12g}"
            )
        return k

    @property
    def n_steps(self) -> int:
        n = int(math.floor(self.horizon / self.step_dt + 1e-9))
        if n + 1 > MAX_GRID_POINTS:
            raise ConfigError(
                f"horizon/step_dt gives {n + 1} grid points, limit is {MAX_GRID_POINTS}"
            )
        return n


def _check_rate(name: str, value: float) -> None:
    if math.isnan(value) or value < 0:
        raise DomainError(f"{name} must be >= 0, got {value}")


def window_derivative(params: ModelParams, w_now: float, x_delayed: float) -> float:
    _check_rate("w_now", w_now)
    _check_rate("x_delayed", x_delayed)
    p = params.loss.probability(x_delayed)
    T = params.rtt_T
    return (1.0 - p) / T - x_delayed * p * w_now / 2.0


def rate_derivative(params: ModelParams, x_now: float, x_delayed: float) -> float:
    _check_rate("x_now", x_now)
    _check_rate("x_delayed", x_delayed)
    p = params.loss.probability(x_delayed)
    T = params.rtt_T
    return (1.0 - p) / (T * T) - x_delayed * p * x_now / 2.0


class _HasProbability(Protocol):
    capacity_C: float

    def probability(self, rate_x: float) -> float: ...


def fixed_point_gap(loss: _HasProbability, rtt_T: float, x: float) -> float:
    """``x - sqrt(2 (1 - p(x)) / p(x)) / T``; ``-inf`` where ``p(x) == 0``."""
    p = loss.probability(x)
    if p <= 0.0:
        return -math.inf
    return x - math.sqrt(2.0 * (1.0 - p) / p) / rtt_T


def _bisect(g: Callable[[float], float], lo: float, hi: float) -> float:
    g_lo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid < 0) == (g_lo < 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return lo if abs(g(lo)) <= abs(g(hi)) else hi


def equilibrium_rate(loss: _HasProbability, rtt_T: float, grid: int = 1000) -> float:
    """Rate ``x_s`` in (0, C] where the delayed dynamics are at rest.

    Bisection on ``g(x) = x - sqrt(2 (1 - p) / p) / T`` between the smallest
    grid point with ``p > 0`` and ``C``.
    """
    if not math.isfinite(rtt_T) or rtt_T <= 0:
        raise ConfigError(f"rtt_T must be > 0, got {rtt_T}")
    C = loss.capacity_C

    def g(x: float) -> float:
        return fixed_point_gap(loss, rtt_T, x)

    x_lo = None
    for i in range(1, grid + 1):
        x = C * i / grid
        if loss.probability(x) > 0.0:
            x_lo = x
            break
    if x_lo is None:
        raise NoEquilibrium("p(x) == 0 on all of (0, C]")
    g_lo, g_hi = g(x_lo), g(C)
    if g_hi == 0.0:
        return C
    if g_lo > 0.0:
        raise NoEquilibrium(
            f"g(x) = x - sqrt(2(1-p)/p)/T is already positive at x={x_lo:g}; no sign change on (0, C]"
        )
    if g_hi < 0.0:
        raise NoEquilibrium(
            f"g(C) = {g_hi:.6g} < 0: the fixed point lies above C={C}"
        )
    return _bisect(g, x_lo, C)
