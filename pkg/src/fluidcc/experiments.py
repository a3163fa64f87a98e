"""Experiment presets, single runs, fluid/packet comparison and sweeps."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .dynamics import DEFAULT_HORIZON, DEFAULT_X0, ModelParams
from .errors import ConfigError, FluidccError
from .integrator import Trajectory, integrate
from .loss import LossModel, Variant
from .packetsim import PacketSimResult, config_for, run_packet_sim
from .stationary import LemmaReport, StationaryPoint, find_stationary_points, lemma_report

COUNT_TOL = 2
VALUE_TOL = 1.5
CROSS_CHECK_REL_TOL = 0.30
MIN_SAWTOOTH_PEAKS = 3
PACKET_DURATION = 60.0
TABLE_RTT = 0.5


@dataclass(frozen=True)
class Expected:
    point_count: Optional[int] = None
    traj_max: Optional[float] = None
    traj_min: Optional[float] = None
    count_tol: int = COUNT_TOL
    value_tol: float = VALUE_TOL
    single_max: Optional[bool] = None


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    params: ModelParams
    expected: Optional[Expected] = None

    @property
    def loss_variant(self) -> Variant:
        return self.params.loss.variant


@dataclass(frozen=True)
class Check:
    name: str
    observed: Any
    expected: Any
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: observed={_fmt(self.observed)} "
                f"expected={_fmt(self.expected)} tolerance={self.tolerance}")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass
class CrossCheck:
    fluid_mean: float
    packet_throughput: float
    relative_error: float
    peaks: int
    window: tuple[float, float]
    fluid: Trajectory = field(repr=False)
    packet: PacketSimResult = field(repr=False)

    @property
    def checks(self) -> list[Check]:
        return [
            Check("packet_vs_fluid_throughput", self.packet_throughput, self.fluid_mean,
                  f"relative {CROSS_CHECK_REL_TOL:g}",
                  self.relative_error <= CROSS_CHECK_REL_TOL),
            Check("sawtooth_peaks", self.peaks, f">={MIN_SAWTOOTH_PEAKS}", "minimum",
                  self.peaks >= MIN_SAWTOOTH_PEAKS),
        ]


@dataclass
class ExperimentReport:
    preset: ExperimentPreset
    trajectory: Trajectory = field(repr=False)
    points: list[StationaryPoint] = field(repr=False)
    lemma: LemmaReport = field(repr=False)
    checks: list[Check]
    cross_check: Optional[CrossCheck] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.trajectory.rates))


def _finite_queue_params(C: float, B: int) -> ModelParams:
    return ModelParams(LossModel(Variant.FINITE, C, B), TABLE_RTT, horizon=DEFAULT_HORIZON)


def builtin_presets() -> list[ExperimentPreset]:
    table = [
        ("dt1", 10.0, 10, Expected(point_count=9, traj_max=9.0, traj_min=5.0)),
        ("dt2", 10.0, 5, Expected(point_count=10, traj_max=7.0, traj_min=5.0)),
        ("dt3", 5.0, 10, Expected(point_count=8, traj_max=5.0, traj_min=1.0)),
    ]
    presets = [
        ExperimentPreset(f"{tag}-finite", _finite_queue_params(C, B), exp)
        for tag, C, B, exp in table
    ]
    for tag, C, B, _ in table:
        params = ModelParams(LossModel(Variant.INFINITE, C, B), TABLE_RTT,
                             horizon=DEFAULT_HORIZON)
        presets.append(ExperimentPreset(f"{tag}-infinite", params,
                                        Expected(single_max=True)))
    return presets


def get_preset(name: str) -> ExperimentPreset:
    for preset in builtin_presets():
        if preset.name == name:
            return preset
    known = ", ".join(p.name for p in builtin_presets())
    raise ConfigError(f"unknown preset {name!r}; known presets: {known}")


def _expectation_checks(expected: Expected, lemma: LemmaReport) -> list[Check]:
    checks = []
    if expected.point_count is not None:
        checks.append(Check(
            "point_count", lemma.total, expected.point_count, f"+-{expected.count_tol}",
            abs(lemma.total - expected.point_count) <= expected.count_tol,
        ))
    for name, observed, target in (
        ("traj_max", lemma.stationary_max, expected.traj_max),
        ("traj_min", lemma.stationary_min, expected.traj_min),
    ):
        if target is None:
            continue
        ok = observed is not None and abs(observed - target) <= expected.value_tol
        checks.append(Check(name, observed, target, f"+-{expected.value_tol:g} pps", ok))
    if expected.single_max is not None:
        checks.append(Check(
            "single_max_signature", lemma.single_max_signature, expected.single_max,
            "exact", lemma.single_max_signature == expected.single_max,
        ))
    return checks


def compare_with_packet(params: ModelParams, duration: float = PACKET_DURATION,
                        tail_fraction: float = 2.0 / 3.0) -> CrossCheck:
    """Fluid mean rate vs packet-level throughput over the last part of a run.

    Both runs use the same (C, B, T) and duration; the averaging window is
    ``[duration * (1 - tail_fraction), duration]`` for both.
    """
    fluid = integrate(replace(params, horizon=duration))
    start = duration - duration * tail_fraction
    mask = fluid.times >= start - 1e-12
    fluid_mean = float(np.mean(fluid.rates[mask]))
    packet = run_packet_sim(config_for(params.capacity_C, params.loss.buffer_B,
                                       params.rtt_T, duration=duration))
    thr = packet.tail_throughput(tail_fraction)
    return CrossCheck(
        fluid_mean=fluid_mean,
        packet_throughput=thr,
        relative_error=abs(thr - fluid_mean) / fluid_mean,
        peaks=len(packet.sawtooth_peaks()),
        window=(start, duration),
        fluid=fluid,
        packet=packet,
    )


def run_experiment(preset: ExperimentPreset, packet: bool = False,
                   packet_duration: float = PACKET_DURATION) -> ExperimentReport:
    traj = integrate(preset.params)
    points = find_stationary_points(traj)
    lemma = lemma_report(traj, points)
    checks = _expectation_checks(preset.expected, lemma) if preset.expected else []
    cross = None
    if packet:
        cross = compare_with_packet(preset.params, packet_duration)
        checks.extend(cross.checks)
    return ExperimentReport(preset, traj, points, lemma, checks, cross)


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    capacity_C: float
    buffer_B: int
    rtt_T: float
    variant: str
    point_count: Optional[int] = None
    traj_max: Optional[float] = None
    traj_min: Optional[float] = None
    mean_rate: Optional[float] = None
    error: str = ""

    @property
    def key(self) -> tuple:
        return (self.variant, self.capacity_C, self.buffer_B, self.rtt_T)


def _sweep_point(args: tuple) -> SweepRow:
    C, B, T, variant, x0, dt, horizon = args
    try:
        params = ModelParams(LossModel(variant, C, B), T, initial_rate_x0=x0,
                             horizon=horizon, step_dt=dt)
        report = run_experiment(ExperimentPreset(f"sweep-{variant}-{C}-{B}-{T}", params))
        lemma = report.lemma
        return SweepRow(C, B, T, Variant.parse(variant).value, lemma.total,
                        lemma.rate_max, lemma.rate_min, report.mean_rate)
    except FluidccError as exc:
        return SweepRow(C, B, T, str(variant), error=f"{type(exc).__name__}: {exc}")


def sweep(capacities: Sequence[float], buffers: Sequence[int], rtts: Sequence[float],
          variants: Sequence[str | Variant], initial_rate_x0: float = DEFAULT_X0,
          step_steps: Optional[int] = None, horizon: float = DEFAULT_HORIZON,
          workers: int = 1) -> list[SweepRow]:
    """Run the fluid model over the Cartesian grid of the given values.

    ``step_steps`` sets ``step_dt = T / step_steps`` for every grid point
    (default 64).  Failures are recorded per row.  Rows come back sorted by
    (variant, C, B, T) whatever the worker count.
    """
    grid = list(itertools.product(capacities, buffers, rtts, variants))
    if not grid:
        raise ConfigError("sweep grid is empty")
    jobs: list[tuple] = []
    for C, B, T, v in grid:
        variant = v.value if isinstance(v, Variant) else str(v)
        dt = T / step_steps if step_steps else None
        jobs.append((C, B, T, variant, initial_rate_x0, dt, horizon))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return sorted(rows, key=lambda r: r.key)


# -- plain-text preset files ------------------------------------------------

_PRESET_KEYS = {
    "name", "capacity", "buffer", "rtt", "loss", "x0", "dt", "horizon",
    "expect_points", "expect_max", "expect_min", "count_tol", "value_tol",
    "expect_single_max",
}


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _preset_from_fields(fields: dict[str, str], lineno: int) -> ExperimentPreset:
    unknown = set(fields) - _PRESET_KEYS
    if unknown:
        raise ConfigError(f"unknown preset keys near line {lineno}: {sorted(unknown)}")
    for required in ("name", "capacity", "buffer", "rtt"):
        if required not in fields:
            raise ConfigError(f"preset ending at line {lineno} lacks {required!r}")
    try:
        loss = LossModel(fields.get("loss", "finite"), float(fields["capacity"]),
                         int(fields["buffer"]))
        params = ModelParams(
            loss, float(fields["rtt"]),
            initial_rate_x0=float(fields.get("x0", DEFAULT_X0)),
            horizon=float(fields.get("horizon", DEFAULT_HORIZON)),
            step_dt=float(fields["dt"]) if "dt" in fields else None,
        )
        expected = None
        if any(k.startswith("expect_") for k in fields):
            expected = Expected(
                point_count=int(fields["expect_points"]) if "expect_points" in fields else None,
                traj_max=float(fields["expect_max"]) if "expect_max" in fields else None,
                traj_min=float(fields["expect_min"]) if "expect_min" in fields else None,
                count_tol=int(fields.get("count_tol", COUNT_TOL)),
                value_tol=float(fields.get("value_tol", VALUE_TOL)),
                single_max=(_parse_bool(fields["expect_single_max"])
                            if "expect_single_max" in fields else None),
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in preset ending at line {lineno}: {exc}") from None
    return ExperimentPreset(fields["name"], params, expected)


def parse_presets(text: str) -> list[ExperimentPreset]:
    """Parse ``key=value`` lines; blank lines separate presets, ``#`` starts a comment."""
    presets = []
    fields: dict[str, str] = {}
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if fields:
                presets.append(_preset_from_fields(fields, lineno))
                fields = {}
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        fields[key] = value
    if fields:
        presets.append(_preset_from_fields(fields, lineno))
    names = [p.name for p in presets]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate preset names in config file")
    return presets


def is_monotone_nondecreasing(values: Iterable[float], slack: float = 0.0) -> bool:
    vals = list(values)
    return all(b >= a - slack for a, b in zip(vals, vals[1:]))


def finite_mean(values: Iterable[Optional[float]]) -> float:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return sum(vals) / len(vals) if vals else math.nan
