"""Fixed-step RK4 integration of the delayed rate equation.

The delay ``T`` is an integer multiple ``k`` of the step, so the delayed
argument at full steps is read straight off the grid.  Half-step stages use
the cubic Hermite interpolant built from stored rates and derivatives.  The
pre-history ``t <= 0`` is the constant ``initial_rate_x0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ModelParams


def hermite(x0: float, d0: float, x1: float, d1: float, dt: float, s: float) -> float:
    """Cubic Hermite value at fraction ``s`` of an interval of length ``dt``."""
    s2 = s * s
    s3 = s2 * s
    return (
        (2 * s3 - 3 * s2 + 1) * x0
        + (s3 - 2 * s2 + s) * dt * d0
        + (-2 * s3 + 3 * s2) * x1
        + (s3 - s2) * dt * d1
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    params: ModelParams
    times: np.ndarray
    rates: np.ndarray
    derivatives: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    @property
    def step_dt(self) -> float:
        return self.params.step_dt

    def delayed_index(self, i: int) -> int:
        return i - self.params.delay_steps

    def delayed_rate_at_index(self, i: int) -> float:
        j = self.delayed_index(i)
        return self.params.initial_rate_x0 if j < 0 else float(self.rates[j])

    def rate_at(self, t: float) -> float:
        """Rate at arbitrary time ``t`` (Hermite between grid points, history before 0)."""
        if t <= 0.0:
            return self.params.initial_rate_x0
        dt = self.step_dt
        n = len(self.times) - 1
        pos = t / dt
        j = min(int(math.floor(pos)), n - 1)
        s = pos - j
        if j >= n:
            return float(self.rates[n])
        value = hermite(
            float(self.rates[j]), float(self.derivatives[j]),
            float(self.rates[j + 1]), float(self.derivatives[j + 1]),
            dt, s,
        )
        return min(self.params.capacity_C, max(0.0, value))

    def delayed_rate_at(self, t: float) -> float:
        return self.rate_at(t - self.params.rtt_T)


def integrate(params: ModelParams) -> Trajectory:
    """Integrate ``dx/dt`` over ``[0, horizon]`` on the grid ``i * step_dt``."""
    k = params.delay_steps
    n = params.n_steps
    dt = params.step_dt
    T = params.rtt_T
    C = params.capacity_C
    x0 = params.initial_rate_x0
    prob = params.loss.probability
    inv_T2 = 1.0 / (T * T)

    def f(x: float, xd: float) -> float:
        p = prob(xd)
        return (1.0 - p) * inv_T2 - xd * p * x / 2.0

    xs = [0.0] * (n + 1)
    ds = [0.0] * (n + 1)
    xs[0] = x0
    ds[0] = f(x0, x0)
    half = 0.5 * dt
    for i in range(n):
        j = i - k
        if j + 1 <= 0:
            xd0 = xdm = xd1 = x0
        else:
            xd0 = xs[j]
            xd1 = xs[j + 1]
            xdm = 0.5 * (xd0 + xd1) + dt * (ds[j] - ds[j + 1]) / 8.0
            xdm = min(C, max(0.0, xdm))
        x = xs[i]
        k1 = f(x, xd0)
        k2 = f(x + half * k1, xdm)
        k3 = f(x + half * k2, xdm)
        k4 = f(x + dt * k3, xd1)
        x_next = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        x_next = min(C, max(0.0, x_next))
        xs[i + 1] = x_next
        ds[i + 1] = f(x_next, xd1)

    times = np.arange(n + 1, dtype=float) * dt
    return Trajectory(
        params=params,
        times=times,
        rates=np.asarray(xs, dtype=float),
        derivatives=np.asarray(ds, dtype=float),
    )
