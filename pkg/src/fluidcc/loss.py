"""Drop Tail loss-probability models.

Two variants are provided:

* ``FINITE`` -- small-buffer approximation ``p(x) = min(1, (x/C)**B)``.
* ``INFINITE`` -- M/M/1/B blocking probability
  ``p(x) = (1 - rho) * rho**B / (1 - rho**(B + 1))`` with ``rho = x / C``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError

MAX_BUFFER = 10**6
# half-width of the band around rho == 1 where the analytic limit is used
RHO_ONE_BAND = 1e-9


class Variant(str, enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"loss variant must be one of {[v.value for v in cls]}, got {value!r}"
            ) from None


@dataclass(frozen=True)
class LossModel:
    variant: Variant
    capacity_C: float
    buffer_B: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (isinstance(self.capacity_C, (int, float)) and math.isfinite(self.capacity_C)):
            raise ConfigError(f"capacity_C must be a finite number, got {self.capacity_C!r}")
        if self.capacity_C <= 0:
            raise ConfigError(f"capacity_C must be > 0, got {self.capacity_C}")
        if isinstance(self.buffer_B, bool) or not isinstance(self.buffer_B, int):
            if isinstance(self.buffer_B, float) and self.buffer_B.is_integer():
                object.__setattr__(self, "buffer_B", int(self.buffer_B))
            else:
                raise ConfigError(f"buffer_B must be an integer, got {self.buffer_B!r}")
        if not 1 <= self.buffer_B <= MAX_BUFFER:
            raise ConfigError(f"buffer_B must be in [1, {MAX_BUFFER}], got {self.buffer_B}")

    def probability(self, rate_x: float) -> float:
        return loss_probability(self, rate_x)


def _finite(rate_x: float, C: float, B: int) -> float:
    if rate_x == 0.0:
        return 0.0
    if rate_x >= C:
        return 1.0
    rho = rate_x / C
    if rho == 0.0:
        return 0.0
    return math.exp(B * math.log(rho))


def _infinite(rate_x: float, C: float, B: int) -> float:
    if rate_x == 0.0:
        return 0.0
    rho = rate_x / C
    if rho == 0.0:
        return 0.0
    delta = (rate_x - C) / C
    if abs(delta) < RHO_ONE_BAND:
        return 1.0 / (B + 1)
    log_rho = math.log1p(delta) if abs(delta) < 0.5 else math.log(rho)
    if rho < 1.0:
        # (1 - rho) rho^B / (1 - rho^(B+1))
        return -delta * math.exp(B * log_rho) / -math.expm1((B + 1) * log_rho)
    # divide through by rho^(B+1) so nothing overflows
    return (delta / rho) / -math.expm1(-(B + 1) * log_rho)


def loss_probability(model: LossModel, rate_x: float) -> float:
    """Packet-loss probability at sending rate ``rate_x`` (packets/s).

    Rates above ``C`` are accepted: the finite-buffer form saturates at 1 and
    the M/M/1/B form stays inside [0, 1] for ``rho > 1``.
    """
    if math.isnan(rate_x) or rate_x < 0:
        raise DomainError(f"rate_x must be >= 0, got {rate_x}")
    if model.variant is Variant.FINITE:
        p = _finite(rate_x, model.capacity_C, model.buffer_B)
    else:
        p = _infinite(rate_x, model.capacity_C, model.buffer_B)
    return min(1.0, max(0.0, p))
