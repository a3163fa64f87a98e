"""Stationary points of a rate trajectory and the rest-point checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import rate_derivative
from .errors import ConfigError, WindowTooSmall
from .integrator import Trajectory

STATIONARY_TOL_FACTOR = 1e-6
MIN_PLATEAU_RUN = 3
MIN_SIDE_POINTS = 3
# float slack for the neighbourhood inequality, relative to C
NEIGHBOURHOOD_SLACK = 1e-9


class Kind(str, enum.Enum):
    LOCAL_MAX = "LocalMax"
    LOCAL_MIN = "LocalMin"
    PLATEAU = "Plateau"


@dataclass(frozen=True)
class StationaryPoint:
    time_t: float
    rate_x: float
    kind: Kind
    residual: float
    loss_p: float
    eq7_gap: float
    delayed_rate: float
    lo_index: int
    hi_index: int


def stationarity_tolerance(traj: Trajectory) -> float:
    """Scale-aware bound on ``|dx/dt|``: ``1e-6 * C / T``."""
    p = traj.params
    return STATIONARY_TOL_FACTOR * p.capacity_C / p.rtt_T


def neighbourhood_radius(traj: Trajectory) -> float:
    return max(3 * traj.step_dt, traj.params.rtt_T / 8)


def rest_rate(traj: Trajectory, x_delayed: float) -> float:
    """``sqrt(2 (1 - p) / p) / T`` at ``p = p(x_delayed)``; inf when ``p == 0``."""
    p = traj.params.loss.probability(x_delayed)
    if p <= 0.0:
        return math.inf
    return math.sqrt(2.0 * (1.0 - p) / p) / traj.params.rtt_T


def balance_rate(traj: Trajectory, x_delayed: float) -> float:
    """Current rate that zeroes ``dx/dt`` for a given delayed rate."""
    p = traj.params.loss.probability(x_delayed)
    T = traj.params.rtt_T
    if p <= 0.0 or x_delayed <= 0.0:
        return math.inf
    return 2.0 * (1.0 - p) / (T * T * x_delayed * p)


def _rhs_at(traj: Trajectory, t: float) -> float:
    return rate_derivative(traj.params, traj.rate_at(t), traj.delayed_rate_at(t))


def _refine(traj: Trajectory, lo: int, hi: int) -> float:
    """Bisect the interpolated right-hand side on ``[times[lo], times[hi]]``.

    Runs to floating-point resolution, well below ``step_dt / 1024``.
    """
    a = float(traj.times[lo])
    b = float(traj.times[hi])
    ga = float(traj.derivatives[lo])
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        gm = _rhs_at(traj, mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b = mid
    return a if abs(_rhs_at(traj, a)) <= abs(_rhs_at(traj, b)) else b


def _make_point(traj: Trajectory, t: float, kind: Kind, lo: int, hi: int,
                x: Optional[float] = None, xd: Optional[float] = None) -> StationaryPoint:
    if x is None:
        x = traj.rate_at(t)
    if xd is None:
        xd = traj.delayed_rate_at(t)
    residual = abs(rate_derivative(traj.params, x, xd))
    return StationaryPoint(
        time_t=t,
        rate_x=x,
        kind=kind,
        residual=residual,
        loss_p=traj.params.loss.probability(x),
        eq7_gap=abs(x - rest_rate(traj, xd)),
        delayed_rate=xd,
        lo_index=lo,
        hi_index=hi,
    )


def classify_extremum(traj: Trajectory, lo: int, hi: int,
                      time_t: Optional[float] = None) -> Kind:
    """Classify the stationary point bracketed by grid indices ``lo < hi``.

    The derivative sign pattern proposes LocalMax (+ to -) or LocalMin (- to +);
    the proposal stands only if every grid rate within ``max(3 dt, T/8)`` of the
    point stays on the correct side of the point's rate.  Otherwise Plateau.
    """
    n = len(traj)
    if lo - (MIN_SIDE_POINTS - 1) < 0 or hi + (MIN_SIDE_POINTS - 1) > n - 1:
        raise WindowTooSmall(
            f"need {MIN_SIDE_POINTS} grid points on each side of [{lo}, {hi}] (n={n})"
        )
    tol = stationarity_tolerance(traj)
    d_lo = float(traj.derivatives[lo])
    d_hi = float(traj.derivatives[hi])
    if abs(d_lo) < tol or abs(d_hi) < tol:
        return Kind.PLATEAU
    if d_lo > 0 > d_hi:
        proposed = Kind.LOCAL_MAX
    elif d_lo < 0 < d_hi:
        proposed = Kind.LOCAL_MIN
    else:
        return Kind.PLATEAU

    if time_t is None:
        time_t = _refine(traj, lo, hi)
    x_n = traj.rate_at(time_t)
    sigma = neighbourhood_radius(traj)
    slack = NEIGHBOURHOOD_SLACK * traj.params.capacity_C
    dt = traj.step_dt
    first = max(0, int(math.ceil((time_t - sigma) / dt - 1e-9)))
    last = min(n - 1, int(math.floor((time_t + sigma) / dt + 1e-9)))
    window = traj.rates[first:last + 1]
    if proposed is Kind.LOCAL_MAX:
        ok = bool((window <= x_n + slack).all())
    else:
        ok = bool((window >= x_n - slack).all())
    return proposed if ok else Kind.PLATEAU


def find_stationary_points(traj: Trajectory) -> list[StationaryPoint]:
    """Locate points where ``dx/dt == 0``, ordered by time.

    Sign changes between derivative samples are refined by bisection.  Runs of
    at least three samples with ``|dx/dt|`` below tolerance collapse to one
    Plateau point at the run's middle sample.  Shorter near-zero runs are
    skipped over when looking for sign changes.
    """
    n = len(traj)
    if n < 3:
        raise ConfigError(f"trajectory needs at least 3 points, got {n}")
    tol = stationarity_tolerance(traj)
    d = traj.derivatives
    points: list[StationaryPoint] = []

    prev: Optional[int] = None
    i = 0
    while i < n:
        if abs(d[i]) < tol:
            j = i
            while j + 1 < n and abs(d[j + 1]) < tol:
                j += 1
            if j - i + 1 >= MIN_PLATEAU_RUN:
                mid = (i + j) // 2
                points.append(_make_point(
                    traj, float(traj.times[mid]), Kind.PLATEAU, i, j,
                    x=float(traj.rates[mid]), xd=traj.delayed_rate_at_index(mid),
                ))
                prev = None
            i = j + 1
            continue
        if prev is not None and (d[prev] > 0) != (d[i] > 0):
            t = _refine(traj, prev, i)
            try:
                kind = classify_extremum(traj, prev, i, time_t=t)
            except WindowTooSmall:
                kind = Kind.LOCAL_MAX if d[prev] > 0 else Kind.LOCAL_MIN
            points.append(_make_point(traj, t, kind, prev, i))
        prev = i
        i += 1
    return points


@dataclass
class LemmaReport:
    counts: dict[str, int]
    total: int
    rate_max: float
    rate_min: float
    stationary_max: Optional[float]
    stationary_min: Optional[float]
    eq7_gaps: list[float]
    single_max_signature: bool
    points: list[StationaryPoint] = field(repr=False, default_factory=list)


def lemma_report(traj: Trajectory,
                 points: Optional[list[StationaryPoint]] = None) -> LemmaReport:
    """Summarise the stationary points of ``traj``.

    ``single_max_signature`` holds when there is exactly one LocalMax and no
    strict extremum follows it (plateaus may).
    """
    if points is None:
        points = find_stationary_points(traj)
    counts = {k.value: 0 for k in Kind}
    for pt in points:
        counts[pt.kind.value] += 1
    rates = [pt.rate_x for pt in points]

    maxima = [i for i, pt in enumerate(points) if pt.kind is Kind.LOCAL_MAX]
    signature = len(maxima) == 1 and all(
        pt.kind is Kind.PLATEAU for pt in points[maxima[0] + 1:]
    )
    return LemmaReport(
        counts=counts,
        total=len(points),
        rate_max=float(traj.rates.max()),
        rate_min=float(traj.rates.min()),
        stationary_max=max(rates) if rates else None,
        stationary_min=min(rates) if rates else None,
        eq7_gaps=[pt.eq7_gap for pt in points],
        single_max_signature=signature,
        points=list(points),
    )


def sign_flips_after_first_max(traj: Trajectory) -> int:
    """Number of + to - derivative changes after the first one (near-zero samples skipped)."""
    tol = stationarity_tolerance(traj)
    signs = [1 if v > 0 else -1 for v in traj.derivatives if abs(v) >= tol]
    flips = [i for i in range(1, len(signs)) if signs[i - 1] > 0 > signs[i]]
    return max(0, len(flips) - 1)
