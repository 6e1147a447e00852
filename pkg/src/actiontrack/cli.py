"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ActionTrackError, InputError
from .geom3d import fit_extrinsics, fit_intrinsics, initial_extrinsics
from .geom3d.io import read_calibration, read_correspondences, write_calibration

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="actiontrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="estimate intrinsics or extrinsics from correspondences")
    c.add_argument("mode", choices=["intrinsics", "extrinsics"])
    c.add_argument("--input", required=True, type=Path, help="correspondence file")
    c.add_argument("--intrinsics", type=Path, help="calibration file with the intrinsics (extrinsics mode)")
    c.add_argument("--initial", type=Path, help="calibration file with a starting pose (extrinsics mode)")
    c.add_argument("--width", type=int, help="sensor width in pixels (intrinsics mode)")
    c.add_argument("--height", type=int, help="sensor height in pixels (intrinsics mode)")
    c.add_argument("--output", required=True, type=Path)

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    s.add_argument("--config", type=Path, help="scenario INI (default: built-in four-agent scenario)")
    s.add_argument("--scenario", default="four_agents", help="built-in scenario name when --config is not given")
    s.add_argument("--seed", type=_seed)
    s.add_argument("--output", required=True, type=Path)

    r = sub.add_parser("run", help="track and classify actions over precomputed streams")
    r.add_argument("--config", required=True, type=Path, help="run INI")
    r.add_argument("--output", type=Path, help="directory for tracks.txt (default: from the config)")

    e = sub.add_parser("evaluate", help="score tracker output against truth")
    e.add_argument("--tracks", required=True, type=Path)
    e.add_argument("--truth", required=True, type=Path)
    e.add_argument("--lag", type=float, default=3.0, help="action lag tolerance in seconds")
    e.add_argument("--window", type=float, default=3.0, help="measurement window in seconds")
    e.add_argument("--gate", type=float, default=1.0, help="ground matching gate in meters")
    e.add_argument("--output", required=True, type=Path)

    g = sub.add_parser("plot", help="render overlays and a speed timeline")
    g.add_argument("--tracks", required=True, type=Path)
    g.add_argument("--frames", required=True, type=Path, help="frame metadata stream (frame size)")
    g.add_argument("--every", type=int, default=25, help="overlay every Nth frame")
    g.add_argument("--output", required=True, type=Path)
    return p


def _need(path: Path, what: str) -> Path:
    if path is None or not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


def cmd_calibrate(args) -> int:
    kind, groups = read_correspondences(_need(args.input, "correspondence file"))
    args.output.mkdir(parents=True, exist_ok=True)
    lines = []
    if args.mode == "extrinsics":
        if kind != "extrinsics":
            raise InputError("extrinsics needs 'view u v X Y Z' ground control points")
        intr, _ = read_calibration(_need(args.intrinsics, "intrinsics file"))
        gcps = [g for view in groups.values() for g in view]
        if args.initial is not None:
            _, initial = read_calibration(_need(args.initial, "initial pose file"))
            if initial is None:
                raise InputError(f"{args.initial} carries no pose")
        else:
            initial = initial_extrinsics(gcps, intr)
        fit = fit_extrinsics(gcps, intr, initial)
        write_calibration(args.output / "camera.cal", intr, fit.extrinsics)
        lines += [f"rms_px {fit.rms:.4f}", f"# rms_px_exact {fit.rms:.6e}", f"iterations {fit.iterations}", f"points {len(gcps)}"]
        lines += ["# point residual_px"] + [f"point_{i} {r:.4f}" for i, r in enumerate(fit.residuals)]
        rms = fit.rms
    else:
        if kind != "intrinsics":
            raise InputError("intrinsics needs 'view u v x y' planar target observations")
        if args.width is None or args.height is None:
            raise InputError("intrinsics needs --width and --height")
        fit = fit_intrinsics(list(groups.values()), args.width, args.height)
        k = fit.intrinsics
        write_calibration(args.output / "camera.cal", k)
        lines += [f"rms_px {fit.rms:.4f}", f"# rms_px_exact {fit.rms:.6e}", f"views {len(groups)}"]
        lines += [f"{n} {getattr(k, n):.4f}" for n in ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2")]
        lines += ["# view rms_px"] + [f"view_{v} {r:.4f}" for v, r in zip(groups, fit.view_rms)]
        rms = fit.rms
    (args.output / "residuals.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"calibration written to {args.output / 'camera.cal'}; rms residual {rms:.3e} px")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simeval.scenario import builtin_scenario, generate, load_scenario, write_scenario

    if args.config is not None:
        cfg = load_scenario(_need(args.config, "scenario config"))
    else:
        try:
            cfg = builtin_scenario(args.scenario)
        except FileNotFoundError:
            raise InputError(f"no built-in scenario named {args.scenario!r}") from None
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    gen = generate(cfg)
    paths = write_scenario(gen, args.output)
    print(f"{len(gen.frames)} frames, {len(gen.detections)} detections, {len(gen.poses)} poses written to {args.output}")
    print(f"run with: actiontrack run --config {paths['run']}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .pipeline import load_run_config, run_pipeline

    cfg = load_run_config(_need(args.config, "run config"), args.output)
    cfg.tracks.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.tracks, "w", encoding="utf-8", newline="\n") as sink:
        stats = run_pipeline(cfg, sink)
    print(f"{stats.frames} frames, {stats.records} records in {stats.seconds:.3f} s ({stats.fps:.1f} frames/s)")
    print(f"tracks written to {cfg.tracks}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .plotting import plot_confusion
    from .records import parse_output, parse_truth
    from .simeval.evaluate import CODES, check_frame_ranges, evaluate_actions, evaluate_tracking, format_report

    output, out_range = parse_output(_need(args.tracks, "tracks file").read_text(encoding="utf-8"), str(args.tracks))
    truth, truth_range = parse_truth(_need(args.truth, "truth file").read_text(encoding="utf-8"), str(args.truth))
    check_frame_ranges(out_range, truth_range)
    tracking = evaluate_tracking(output, truth, args.gate)
    actions = evaluate_actions(output, truth, args.lag, args.window, args.gate)
    report = format_report(tracking, actions)
    args.output.mkdir(parents=True, exist_ok=True)
    (args.output / "metrics.txt").write_text(report, encoding="utf-8")
    plot_confusion(actions.confusion, CODES, args.output / "confusion.png")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .ingest import parse_frame_stream
    from .plotting import plot_overlays, plot_speed_timeline
    from .records import parse_output

    frames = list(parse_frame_stream(_need(args.frames, "frame metadata")))
    if not frames:
        raise InputError(f"{args.frames} holds no frame metadata")
    if args.every < 1:
        raise InputError("--every must be >= 1")
    records, _ = parse_output(_need(args.tracks, "tracks file").read_text(encoding="utf-8"), str(args.tracks))
    written = plot_overlays(records, (frames[0].width, frames[0].height), args.output, args.every)
    if records:
        written.append(plot_speed_timeline(records, args.output / "speed_timeline.png"))
    print(f"{len(written)} images written to {args.output}")
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "run": cmd_run,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ActionTrackError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
