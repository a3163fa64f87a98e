"""Command-line entry point: ``fluidcc {fluid,packet,experiment,sweep,compare,rerun}``.

Exit status: 0 on success, 1 when an expectation check fails, 2 on a
configuration error (including unknown flags).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Optional, Sequence

from . import __version__
from .dynamics import (DEFAULT_HORIZON, DEFAULT_STEPS_PER_RTT, DEFAULT_X0, ModelParams,
                       equilibrium_rate)
from .errors import ConfigError, FluidccError
from .experiments import (COUNT_TOL, CROSS_CHECK_REL_TOL, PACKET_DURATION, VALUE_TOL,
                          ExperimentPreset, ExperimentReport, builtin_presets,
                          compare_with_packet, is_monotone_nondecreasing, parse_presets,
                          run_experiment, sweep)
from .integrator import integrate
from .loss import LossModel, Variant
from .output import (OutputBundle, Series, binned_throughput, cwnd_table, format_value,
                     parse_metadata, phase_table, plot_trajectory, queue_table,
                     resolve_out_dir, stationary_table, trajectory_table, write_csv,
                     write_plot)
from .packetsim import PacketSimConfig, run_packet_sim
from .stationary import (find_stationary_points, lemma_report, neighbourhood_radius,
                         stationarity_tolerance)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse API
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_link_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity", type=float, default=10.0, help="bottleneck capacity C (pps)")
    p.add_argument("--buffer", type=int, default=10, help="buffer size B (packets)")
    p.add_argument("--rtt", type=float, default=0.5, help="round-trip time T (s)")


def _add_fluid_args(p: argparse.ArgumentParser) -> None:
    _add_link_args(p)
    p.add_argument("--loss", choices=[v.value for v in Variant], default="finite")
    p.add_argument("--x0", default=repr(DEFAULT_X0),
                   help="constant pre-history rate (pps), or 'equilibrium'")
    p.add_argument("--dt", type=float, default=None,
                   help=f"step size (s); default rtt/{DEFAULT_STEPS_PER_RTT}")
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="output directory (FLUIDCC_OUT overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluidcc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fluidcc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fluid", help="integrate the fluid model and analyse stationary points")
    _add_fluid_args(p)
    _add_out(p)

    p = sub.add_parser("packet", help="run the packet-level Reno simulator")
    _add_link_args(p)
    p.add_argument("--duration", type=float, default=PACKET_DURATION)
    p.add_argument("--init-cwnd", type=float, default=1.0)
    p.add_argument("--init-ssthresh", type=float, default=64.0)
    _add_out(p)

    p = sub.add_parser("experiment", help="run a named preset or all of them")
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--all", action="store_true")
    p.add_argument("--config", default=None, help="key=value preset file")
    p.add_argument("--config-inline", default=None, help=argparse.SUPPRESS)
    p.add_argument("--packet", action="store_true", help="also cross-check with the packet sim")
    p.add_argument("--list", action="store_true", help="list presets and exit")
    _add_out(p)

    p = sub.add_parser("sweep", help="run the fluid model over a parameter grid")
    p.add_argument("--capacity-list", default="10")
    p.add_argument("--buffer-list", default="10")
    p.add_argument("--rtt-list", default="0.5")
    p.add_argument("--loss-list", default="finite")
    p.add_argument("--x0", type=float, default=DEFAULT_X0)
    p.add_argument("--steps-per-rtt", type=int, default=DEFAULT_STEPS_PER_RTT)
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    p.add_argument("--workers", type=int, default=1)
    _add_out(p)

    p = sub.add_parser("compare", help="fluid mean rate vs packet-sim throughput")
    _add_fluid_args(p)
    p.add_argument("--duration", type=float, default=PACKET_DURATION)
    _add_out(p)

    p = sub.add_parser("rerun", help="repeat a run from its metadata.txt")
    p.add_argument("metadata")
    _add_out(p)
    return parser


# -- helpers ------------------------------------------------------------------

def _canonical_argv(parser: argparse.ArgumentParser, args: argparse.Namespace) -> list[str]:
    """Fully resolved argument list (minus --out) that reproduces the run."""
    sub = _subparser(parser, args.command)
    argv = [args.command]
    positionals = []
    for action in sub._actions:
        dest = action.dest
        if dest in ("help", "out") or action.help == argparse.SUPPRESS and dest != "config_inline":
            continue
        value = getattr(args, dest, None)
        if not action.option_strings:
            if value is not None:
                positionals.append(str(value))
            continue
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv + positionals


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _model_params(args: argparse.Namespace, horizon: Optional[float] = None) -> ModelParams:
    loss = LossModel(args.loss, args.capacity, args.buffer)
    if str(args.x0).strip().lower() in ("equilibrium", "eq"):
        x0 = equilibrium_rate(loss, args.rtt)
    else:
        try:
            x0 = float(args.x0)
        except ValueError:
            raise ConfigError(f"--x0 must be a number or 'equilibrium', got {args.x0!r}") from None
    return ModelParams(loss, args.rtt, initial_rate_x0=x0,
                       horizon=args.horizon if horizon is None else horizon,
                       step_dt=args.dt)


def _params_metadata(params: ModelParams) -> dict[str, Any]:
    return {
        "capacity_C": float(params.capacity_C),
        "buffer_B": params.loss.buffer_B,
        "rtt_T": float(params.rtt_T),
        "loss_variant": params.loss.variant.value,
        "initial_rate_x0": float(params.initial_rate_x0),
        "initial_history": "constant",
        "horizon": float(params.horizon),
        "step_dt": float(params.step_dt),
        "delay_steps": params.delay_steps,
        "integrator": "rk4-fixed-step, hermite half-step delay, clamp [0,C] per step",
    }


def _base_metadata(argv: list[str]) -> dict[str, Any]:
    return {"tool": "fluidcc", "version": __version__, "command": argv[0],
            "argv": json.dumps(argv)}


def _lemma_text(name: str, report) -> str:
    lines = [f"# {name}",
             f"stationary points: {report.total}"]
    for kind, count in report.counts.items():
        lines.append(f"  {kind}: {count}")
    lines += [
        f"rate max/min over trajectory: {format_value(report.rate_max)} / "
        f"{format_value(report.rate_min)}",
        f"rate max/min over stationary points: {format_value(report.stationary_max)} / "
        f"{format_value(report.stationary_min)}",
        f"single LocalMax signature: {format_value(report.single_max_signature)}",
    ]
    for p in report.points:
        lines.append(f"  t={format_value(p.time_t)} x={format_value(p.rate_x)} "
                     f"{p.kind.value} residual={format_value(p.residual)} "
                     f"eq7_gap={format_value(p.eq7_gap)}")
    return "\n".join(lines) + "\n"


def _analysis_metadata(traj) -> dict[str, Any]:
    return {
        "stationarity_tol": stationarity_tolerance(traj),
        "neighbourhood_radius": neighbourhood_radius(traj),
        "plateau_min_run": 3,
    }


# -- subcommands ----------------------------------------------------------------

def _cmd_fluid(args, argv) -> tuple[OutputBundle, int, str]:
    params = _model_params(args)
    traj = integrate(params)
    points = find_stationary_points(traj)
    report = lemma_report(traj, points)
    meta = _base_metadata(argv) | _params_metadata(params) | _analysis_metadata(traj)
    bundle = OutputBundle(meta)
    bundle.tables["trajectory.csv"] = write_csv(trajectory_table(traj))
    bundle.tables["stationary.csv"] = write_csv(stationary_table(points))
    bundle.plots["trajectory.svg"] = plot_trajectory(
        traj, points, title=f"C={params.capacity_C:g} B={params.loss.buffer_B} "
                            f"T={params.rtt_T:g} ({params.loss.variant.value})")
    text = _lemma_text("fluid", report)
    bundle.texts["lemma.txt"] = text.encode()
    return bundle, EXIT_OK, text


def _cmd_packet(args, argv) -> tuple[OutputBundle, int, str]:
    cfg = PacketSimConfig(args.capacity, args.buffer, args.rtt, args.duration,
                          init_cwnd=args.init_cwnd, init_ssthresh=args.init_ssthresh)
    result = run_packet_sim(cfg)
    meta = _base_metadata(argv) | {
        "capacity_C": float(cfg.capacity_C), "buffer_B": cfg.buffer_B,
        "base_rtt": float(cfg.base_rtt), "duration": float(cfg.duration),
        "init_cwnd": float(cfg.init_cwnd), "init_ssthresh": float(cfg.init_ssthresh),
        "rto": float(cfg.rto), "delayed_ack": False, "seed": cfg.seed,
    }
    bundle = OutputBundle(meta)
    bundle.tables["cwnd.csv"] = write_csv(cwnd_table(result))
    bundle.tables["queue.csv"] = write_csv(queue_table(result))
    bundle.tables["phase.csv"] = write_csv(phase_table(result))
    cw = cwnd_table(result)
    bundle.plots["cwnd.svg"] = write_plot([Series("cwnd", cw["time"], cw["cwnd"])],
                                          title="packet-level cwnd", y_label="cwnd (packets)")
    text = (f"sent={result.sent} delivered={result.delivered} drops={result.drops} "
            f"in_flight={result.in_flight}\n"
            f"throughput={format_value(result.achieved_throughput)} pps "
            f"tail_throughput={format_value(result.tail_throughput())} pps\n"
            f"timeouts={result.timeouts} fast_retransmits={result.fast_retransmits} "
            f"sawtooth_peaks={len(result.sawtooth_peaks())}\n")
    bundle.texts["packet.txt"] = text.encode()
    return bundle, EXIT_OK, text


def _experiment_presets(args) -> list[ExperimentPreset]:
    if args.config_inline is not None:
        presets = parse_presets(args.config_inline)
    elif args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                presets = parse_presets(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from None
    else:
        presets = builtin_presets()
    if args.all or args.list:
        return presets
    if args.name is None:
        raise ConfigError("experiment needs a preset name or --all")
    chosen = [p for p in presets if p.name == args.name]
    if not chosen:
        raise ConfigError(f"unknown preset {args.name!r}; known: "
                          f"{', '.join(p.name for p in presets)}")
    return chosen


def _cmd_experiment(args, argv) -> tuple[OutputBundle, int, str]:
    presets = sorted(_experiment_presets(args), key=lambda p: p.name)
    if args.list:
        text = "\n".join(f"{p.name}\tC={p.params.capacity_C:g} B={p.params.loss.buffer_B} "
                         f"T={p.params.rtt_T:g} {p.loss_variant.value}" for p in presets) + "\n"
        return OutputBundle(_base_metadata(argv)), EXIT_OK, text
    meta = _base_metadata(argv) | {
        "presets": ",".join(p.name for p in presets),
        "count_tol": COUNT_TOL, "value_tol": VALUE_TOL,
        "cross_check_rel_tol": CROSS_CHECK_REL_TOL, "packet": args.packet,
    }
    bundle = OutputBundle(meta)
    reports: list[ExperimentReport] = [run_experiment(p, packet=args.packet) for p in presets]
    summary: dict[str, list] = {k: [] for k in (
        "name", "variant", "capacity_C", "buffer_B", "rtt_T", "point_count",
        "stationary_max", "stationary_min", "rate_max", "rate_min", "mean_rate",
        "single_max", "passed")}
    lines = []
    for r in reports:
        p = r.preset
        prefix = f"{p.name}/"
        for k, v in _params_metadata(p.params).items():
            meta[f"{p.name}.{k}"] = v
        bundle.tables[prefix + "trajectory.csv"] = write_csv(trajectory_table(r.trajectory))
        bundle.tables[prefix + "stationary.csv"] = write_csv(stationary_table(r.points))
        bundle.plots[prefix + "trajectory.svg"] = plot_trajectory(r.trajectory, r.points,
                                                                  title=p.name)
        if r.cross_check is not None:
            bundle.tables[prefix + "cwnd.csv"] = write_csv(cwnd_table(r.cross_check.packet))
        row = dict(name=p.name, variant=p.loss_variant.value,
                   capacity_C=float(p.params.capacity_C), buffer_B=p.params.loss.buffer_B,
                   rtt_T=float(p.params.rtt_T), point_count=r.lemma.total,
                   stationary_max=r.lemma.stationary_max, stationary_min=r.lemma.stationary_min,
                   rate_max=r.lemma.rate_max, rate_min=r.lemma.rate_min,
                   mean_rate=r.mean_rate, single_max=r.lemma.single_max_signature,
                   passed=r.passed)
        for k, v in row.items():
            summary[k].append(v)
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {p.name}")
        lines += [f"    {c.line()}" for c in r.checks]
    bundle.tables["experiments.csv"] = write_csv(summary)
    text = "\n".join(lines) + "\n"
    bundle.texts["report.txt"] = text.encode()
    code = EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED
    return bundle, code, text


def _split(text: str, cast) -> list:
    try:
        return [cast(s.strip()) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list value {text!r}: {exc}") from None


def _cmd_sweep(args, argv) -> tuple[OutputBundle, int, str]:
    caps = _split(args.capacity_list, float)
    bufs = _split(args.buffer_list, int)
    rtts = _split(args.rtt_list, float)
    losses = [Variant.parse(v) for v in _split(args.loss_list, str)]
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    rows = sweep(caps, bufs, rtts, losses, initial_rate_x0=args.x0,
                 step_steps=args.steps_per_rtt, horizon=args.horizon, workers=args.workers)
    table = {k: [getattr(r, k) for r in rows] for k in (
        "capacity_C", "buffer_B", "rtt_T", "variant", "point_count", "traj_max",
        "traj_min", "mean_rate", "error")}
    meta = _base_metadata(argv) | {
        "grid_points": len(rows), "initial_rate_x0": float(args.x0),
        "steps_per_rtt": args.steps_per_rtt, "horizon": float(args.horizon),
        "initial_history": "constant",
    }
    lines = [f"{r.variant} C={r.capacity_C:g} B={r.buffer_B} T={r.rtt_T:g}: "
             + (r.error or f"points={r.point_count} mean={format_value(r.mean_rate)}")
             for r in rows]
    # soft check: mean rate vs B at fixed (variant, C, T)
    groups: dict[tuple, list] = {}
    for r in rows:
        if not r.error:
            groups.setdefault((r.variant, r.capacity_C, r.rtt_T), []).append(r)
    for (variant, C, T), grp in sorted(groups.items()):
        if len(grp) > 1:
            ok = is_monotone_nondecreasing(r.mean_rate for r in sorted(grp, key=lambda r: r.buffer_B))
            lines.append(f"soft-check mean rate non-decreasing in B ({variant} C={C:g} "
                         f"T={T:g}): {'yes' if ok else 'no'}")
    text = "\n".join(lines) + "\n"
    bundle = OutputBundle(meta, tables={"sweep.csv": write_csv(table)},
                          texts={"sweep.txt": text.encode()})
    return bundle, EXIT_OK, text


def _cmd_compare(args, argv) -> tuple[OutputBundle, int, str]:
    params = _model_params(args)
    cross = compare_with_packet(params, duration=args.duration)
    meta = _base_metadata(argv) | _params_metadata(params) | {
        "duration": float(args.duration), "averaging_window_start": cross.window[0],
        "cross_check_rel_tol": CROSS_CHECK_REL_TOL, "packet_base_rtt": float(params.rtt_T),
        "packet_rto": float(max(2 * params.rtt_T, 1.0)),
    }
    bundle = OutputBundle(meta)
    bundle.tables["trajectory.csv"] = write_csv(trajectory_table(cross.fluid))
    bundle.tables["cwnd.csv"] = write_csv(cwnd_table(cross.packet))
    binned = binned_throughput(cross.packet, params.rtt_T)
    fluid_at = [cross.fluid.rate_at(t) for t in binned["time"]]
    bundle.tables["compare.csv"] = write_csv({
        "time": binned["time"], "fluid_rate": fluid_at,
        "packet_throughput": binned["throughput"]})
    bundle.plots["compare.svg"] = write_plot(
        [Series("fluid x(t)", cross.fluid.times.tolist(), cross.fluid.rates.tolist()),
         Series("packet throughput", binned["time"], binned["throughput"])],
        title="fluid vs packet")
    checks = cross.checks
    text = "\n".join(c.line() for c in checks) + "\n"
    bundle.texts["compare.txt"] = text.encode()
    return bundle, EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED, text


_HANDLERS = {
    "fluid": _cmd_fluid, "packet": _cmd_packet, "experiment": _cmd_experiment,
    "sweep": _cmd_sweep, "compare": _cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "rerun":
            with open(args.metadata, encoding="utf-8") as fh:
                meta = parse_metadata(fh.read())
            if "argv" not in meta:
                raise ConfigError(f"{args.metadata} has no argv entry")
            replay = json.loads(meta["argv"])
            if args.out is not None:
                replay += ["--out", args.out]
            return main(replay)

        if args.command == "experiment" and args.config is not None:
            with open(args.config, encoding="utf-8") as fh:
                args.config_inline = fh.read()
            args.config = None
        canonical = _canonical_argv(parser, args)
        bundle, code, text = _HANDLERS[args.command](args, canonical)
    except (FluidccError, OSError) as exc:
        print(f"fluidcc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    sys.stdout.write(text)
    if not (args.command == "experiment" and args.list):
        out = resolve_out_dir(args.out)
        bundle.write(out)
        print(f"wrote {len(bundle.files())} files to {out}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
