"""CSV, SVG and metadata serialization.

Every writer returns bytes and is deterministic: identical inputs give
identical output.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

from .errors import EmptySeries
from .integrator import Trajectory
from .packetsim import PacketSimResult
from .stationary import Kind, StationaryPoint

SIG_DIGITS = 9


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "__float__"):
        v = float(value)
        if v == 0.0:
            return "0"
        return f"{v:.{SIG_DIGITS}g}"
    return str(value)


def write_csv(table: Mapping[str, Sequence[Any]]) -> bytes:
    """Serialize a column mapping: header, then rows; ',' separator, LF endings."""
    columns = list(table)
    lengths = {len(table[c]) for c in columns}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for i in range(n):
        writer.writerow([format_value(table[c][i]) for c in columns])
    return buf.getvalue().encode("utf-8")


def _parse_cell(cell: str) -> Any:
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(data: bytes) -> dict[str, list[Any]]:
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    rows = list(reader)
    if not rows:
        return {}
    header, body = rows[0], rows[1:]
    return {name: [_parse_cell(r[i]) for r in body] for i, name in enumerate(header)}


# -- tables -----------------------------------------------------------------

def trajectory_table(traj: Trajectory) -> dict[str, list]:
    n = len(traj)
    return {
        "time": traj.times.tolist(),
        "rate": traj.rates.tolist(),
        "derivative": traj.derivatives.tolist(),
        "delayed_rate": [traj.delayed_rate_at_index(i) for i in range(n)],
    }


def stationary_table(points: Sequence[StationaryPoint]) -> dict[str, list]:
    return {
        "time": [p.time_t for p in points],
        "rate": [p.rate_x for p in points],
        "kind": [p.kind for p in points],
        "residual": [p.residual for p in points],
        "loss_p": [p.loss_p for p in points],
        "eq7_gap": [p.eq7_gap for p in points],
        "delayed_rate": [p.delayed_rate for p in points],
    }


def cwnd_table(result: PacketSimResult) -> dict[str, list]:
    return {
        "time": [t for t, _ in result.cwnd_trace],
        "cwnd": [w for _, w in result.cwnd_trace],
    }


def queue_table(result: PacketSimResult) -> dict[str, list]:
    return {
        "time": [t for t, _ in result.queue_trace],
        "queue": [q for _, q in result.queue_trace],
    }


def phase_table(result: PacketSimResult) -> dict[str, list]:
    return {
        "time": [t for t, _ in result.phase_trace],
        "phase": [ph for _, ph in result.phase_trace],
    }


def binned_throughput(result: PacketSimResult, width: float) -> dict[str, list]:
    """Receiver arrivals per bin of ``width`` seconds, as packets/s at bin centres."""
    n_bins = int(math.floor(result.config.duration / width + 1e-9))
    counts = [0] * n_bins
    for t in result.delivery_times:
        b = int(t // width)
        if b < n_bins:
            counts[b] += 1
    return {
        "time": [(b + 0.5) * width for b in range(n_bins)],
        "throughput": [c / width for c in counts],
    }


# -- SVG --------------------------------------------------------------------

@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


_WIDTH, _HEIGHT = 800, 400
_MARGIN = dict(left=60, right=20, top=30, bottom=45)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
_MARKER_COLOR = {Kind.LOCAL_MAX: "#d62728", Kind.LOCAL_MIN: "#2ca02c", Kind.PLATEAU: "#ff7f0e"}


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    raw = span / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _marker(kind: Kind, px: float, py: float) -> str:
    color = _MARKER_COLOR[kind]
    r = 5
    if kind is Kind.LOCAL_MAX:
        pts = f"{px:.2f},{py - r:.2f} {px - r:.2f},{py + r:.2f} {px + r:.2f},{py + r:.2f}"
        return f'<polygon class="marker LocalMax" points="{pts}" fill="{color}"/>'
    if kind is Kind.LOCAL_MIN:
        pts = f"{px:.2f},{py + r:.2f} {px - r:.2f},{py - r:.2f} {px + r:.2f},{py - r:.2f}"
        return f'<polygon class="marker LocalMin" points="{pts}" fill="{color}"/>'
    return (f'<rect class="marker Plateau" x="{px - r:.2f}" y="{py - r:.2f}" '
            f'width="{2 * r}" height="{2 * r}" fill="{color}"/>')


def write_plot(series: Sequence[Series], markers: Sequence[StationaryPoint] = (),
               title: str = "", x_label: str = "time (s)",
               y_label: str = "rate (pps)") -> bytes:
    """Render line series plus stationary-point glyphs as one SVG document.

    Maxima are up-triangles, minima down-triangles, plateaus squares.  A legend
    is drawn when more than one series is given.
    """
    if not series or any(len(s.x) == 0 for s in series):
        raise EmptySeries("write_plot needs at least one non-empty series")
    for s in series:
        if len(s.x) != len(s.y):
            raise ValueError(f"series {s.label!r}: x and y lengths differ")
    xs = [float(v) for s in series for v in s.x] + [m.time_t for m in markers]
    ys = [float(v) for s in series for v in s.y] + [m.rate_x for m in markers]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        pad = max(abs(y_lo) * 0.1, 0.5)
        y_lo, y_hi = y_lo - pad, y_hi + pad
    else:
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    left, top = _MARGIN["left"], _MARGIN["top"]
    plot_w = _WIDTH - left - _MARGIN["right"]
    plot_h = _HEIGHT - top - _MARGIN["bottom"]

    def sx(v: float) -> float:
        return left + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v: float) -> float:
        return top + (y_hi - v) / (y_hi - y_lo) * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{_WIDTH / 2:.1f}" y="18" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    # axes
    x0, y0 = left, top + plot_h
    out.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{left + plot_w}" y2="{y0}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{x0}" y1="{top}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
    out.append(f'<text x="{left + plot_w / 2:.1f}" y="{_HEIGHT - 8}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{escape(x_label)}</text>')
    out.append(f'<text x="14" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 14 {top + plot_h / 2:.1f})">{escape(y_label)}</text>')

    for idx, s in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        pts = " ".join(f"{sx(float(a)):.2f},{sy(float(b)):.2f}" for a, b in zip(s.x, s.y))
        out.append(f'<polyline class="series" data-label="{escape(s.label)}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
    for m in markers:
        out.append(_marker(m.kind, sx(m.time_t), sy(m.rate_x)))

    if len(series) > 1:
        lx, ly = left + plot_w - 170, top + 10
        out.append('<g class="legend">')
        for idx, s in enumerate(series):
            color = _COLORS[idx % len(_COLORS)]
            yy = ly + 16 * idx
            out.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 20}" y2="{yy}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 26}" y="{yy + 4}" font-family="sans-serif" '
                       f'font-size="11">{escape(s.label)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def plot_trajectory(traj: Trajectory, points: Sequence[StationaryPoint] = (),
                    title: str = "") -> bytes:
    return write_plot([Series("x(t)", traj.times.tolist(), traj.rates.tolist())],
                      points, title=title)


# -- metadata and bundles ---------------------------------------------------

def format_metadata(items: Mapping[str, Any]) -> bytes:
    lines = []
    for key, value in items.items():
        if isinstance(value, float):
            text = repr(value)
        else:
            text = format_value(value)
        if "\n" in text:
            raise ValueError(f"metadata value for {key!r} spans lines")
        lines.append(f"{key}={text}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_metadata(data: bytes | str) -> dict[str, str]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


@dataclass
class OutputBundle:
    run_metadata: dict[str, Any]
    tables: dict[str, bytes] = field(default_factory=dict)
    plots: dict[str, bytes] = field(default_factory=dict)
    texts: dict[str, bytes] = field(default_factory=dict)

    def files(self) -> dict[str, bytes]:
        files = {"metadata.txt": format_metadata(self.run_metadata)}
        files.update(self.tables)
        files.update(self.plots)
        files.update(self.texts)
        return files

    def write(self, directory: str | os.PathLike) -> list[Path]:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        written = []
        for name, payload in sorted(self.files().items()):
            path = root / name
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(payload)
            os.replace(tmp, path)
            written.append(path)
        return written


def resolve_out_dir(cli_value: Optional[str]) -> str:
    """``FLUIDCC_OUT`` wins over ``--out``; falls back to ``fluidcc-out``."""
    env = os.environ.get("FLUIDCC_OUT")
    if env:
        return env
    return cli_value or "fluidcc-out"
