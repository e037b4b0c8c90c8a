"""Command-line entry point: ``tiltshape <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import re
import sys
import time

import numpy as np

from .config import Config, ConfigError, load_config
from .forceset import HfsQuery, fibonacci_directions, membership, support_points
from .geom import rank
from .sim import AllocationInfeasible, TableRangeError, make_trajectory, run, summarize
from .tiltopt import GridSpec, TiltTable, build_table

EXIT_OK = 0
EXIT_NO = 1
EXIT_CONFIG = 2
EXIT_UNCERTIFIED = 3
EXIT_TABLE = 4
EXIT_INFEASIBLE = 5

EPILOG = """exit codes:
  0  success
  1  hover-check: platform not hoverable
  2  bad config file or argument
  3  build-table: some cell is not certified (see --allow-uncertified)
  4  simulate: table missing, built for other parameters, or too small
  5  simulate: allocation stayed infeasible
"""

DEFAULT_GRID = "0:1:0.5,0:1:0.5"


class UsageError(Exception):
    pass


def parse_gamma(text: str, n: int) -> np.ndarray:
    if text.strip().lower() == "zero":
        return np.zeros(n)
    try:
        values = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"--gamma expects {n} comma-separated numbers or 'zero', got {text!r}") from None
    if len(values) != n:
        raise UsageError(f"--gamma needs {n} values, got {len(values)}")
    if not all(math.isfinite(v) and abs(v) <= math.pi / 2 for v in values):
        raise UsageError("--gamma values must be finite with |gamma| <= pi/2")
    return np.array(values)


def parse_grid(text: str) -> tuple[GridSpec, GridSpec]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"--grid expects 'x0:x1:step,y0:y1:step', got {text!r}")
    try:
        axes = tuple(GridSpec.parse(p) for p in parts)
        for ax in axes:
            ax.values()
    except ValueError as exc:
        raise UsageError(f"--grid: {exc}") from None
    return axes


def _config(args) -> Config:
    return load_config(args.config) if args.config else Config()


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path else None


def cmd_hover_check(args) -> int:
    cfg = _config(args)
    p = cfg.platform
    gamma = parse_gamma(args.gamma, p.n_uavs)
    q = HfsQuery.at(p, gamma)
    mem = membership(q, [0.0, 0.0, p.weight])
    r = rank(q.maps.M_wrench)
    hoverable = mem.included and r >= 4
    print(f"gamma: {', '.join(f'{g:.6g}' for g in gamma)}")
    print(f"hoverable: {'yes' if hoverable else 'no'}")
    print(f"linf: {mem.linf:.10g}")
    print(f"rank: {r}")
    return EXIT_OK if hoverable else EXIT_NO


def cmd_hfs_export(args) -> int:
    cfg = _config(args)
    if args.directions < 6:
        raise UsageError("--directions must be at least 6")
    gamma = parse_gamma(args.gamma, cfg.platform.n_uavs)
    q = HfsQuery.at(cfg.platform, gamma)
    D = fibonacci_directions(args.directions)
    pts = support_points(q, D)
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh or sys.stdout, lineterminator="\n")
        w.writerow(["dx", "dy", "dz", "fx", "fy", "fz"])
        for d, f in zip(D, pts):
            w.writerow([repr(float(v)) for v in (*d, *f)])
    finally:
        if fh:
            fh.close()
    if args.out:
        print(f"wrote {len(pts)} support points to {args.out}")
    return EXIT_OK


def cmd_build_table(args) -> int:
    cfg = _config(args)
    x_axis, y_axis = parse_grid(args.grid)
    opt = cfg.optimizer
    if args.seed is not None:
        opt = dataclasses.replace(opt, pso=dataclasses.replace(opt.pso, seed=args.seed))
    t0 = time.perf_counter()
    table = build_table(cfg.platform, x_axis, y_axis, opt, workers=args.workers)
    wall = time.perf_counter() - t0
    table.save(args.out)
    n_cert = int(table.certified.sum())
    n_opt = sum(1 for o in table.origin if o != "" and not o.startswith(("rot", "mirror")))
    print(f"cells: {table.n_cells} ({n_opt} optimized, the rest by symmetry)")
    print(f"certified: {n_cert}")
    print(f"max|gamma*|: {float(np.abs(table.gamma).max()):.6f} rad")
    print(f"wall time: {wall:.1f} s")
    print(f"wrote {args.out}")
    if n_cert < table.n_cells and not args.allow_uncertified:
        print("error: uncertified cells present (use --allow-uncertified to accept)", file=sys.stderr)
        return EXIT_UNCERTIFIED
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    try:
        table = TiltTable.load(args.table)
    except FileNotFoundError:
        print(f"error: tilt table not found: {args.table}", file=sys.stderr)
        return EXIT_TABLE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read tilt table {args.table}: {exc}", file=sys.stderr)
        return EXIT_TABLE
    p, sc = cfg.platform, cfg.scenario
    if table.params_digest != p.digest():
        print(f"error: tilt table {args.table} was built for different platform parameters", file=sys.stderr)
        return EXIT_TABLE
    try:
        traj = make_trajectory(sc.trajectory, sc.duration, p, distance=sc.distance, amplitude=sc.amplitude)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TABLE
    duration = sc.duration if args.duration is None else args.duration
    try:
        log = run(p, cfg.controller, table, traj, sc.zone, sc.dt, duration)
    except TableRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TABLE
    except AllocationInfeasible as exc:
        if args.out:
            exc.log.write_csv(args.out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.out:
        log.write_csv(args.out)
    s = summarize(log)
    print(f"steps: {s.steps}")
    print(f"max position error: {s.max_position_error:.6g} m")
    print(f"max orientation error: {s.max_orientation_error_deg:.6g} deg")
    print(f"infeasible steps: {s.infeasible_steps}")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tiltshape",
        description="Hoverability checks, tilt-table building and closed-loop simulation "
        "for a payload carried by tiltable multirotors.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON config; omitted sections use the defaults")

    p = sub.add_parser("hover-check", help="is [0, 0, mg] in the hoverable force set?", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--gamma", default="zero", help="'a,b,c,d' in rad, or 'zero' (default)")
    p.set_defaults(func=cmd_hover_check)

    p = sub.add_parser("hfs-export", help="support points of the hoverable force set as CSV", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--gamma", default="zero", help="'a,b,c,d' in rad, or 'zero' (default)")
    p.add_argument("--directions", type=int, default=200, metavar="N", help="number of directions (>= 6)")
    p.add_argument("--out", metavar="PATH", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_hfs_export)

    p = sub.add_parser("build-table", help="optimize and save the tilt table", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--grid", default=DEFAULT_GRID, help="lateral force grid 'x0:x1:step,y0:y1:step'; axes starting at 0 are "
                   f"mirrored to the full range (default {DEFAULT_GRID})")
    p.add_argument("--out", metavar="PATH", required=True, help="output table (JSON)")
    p.add_argument("--seed", type=int, help="overrides optimizer.pso.seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--allow-uncertified", action="store_true", help="exit 0 even if some cells are uncertified")
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser("simulate", help="closed-loop run of the configured scenario", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--table", metavar="PATH", required=True, help="tilt table from build-table")
    p.add_argument("--out", metavar="PATH", help="log CSV")
    p.add_argument("--duration", type=float, help="simulated time in s (default: scenario.duration)")
    p.set_defaults(func=cmd_simulate)
    return ap


def _join_negative_values(argv: list[str]) -> list[str]:
    # argparse reads "--gamma -0.5,..." as two options; glue the value on.
    out: list[str] = []
    for tok in argv:
        if out and out[-1] == "--gamma" and re.match(r"-[\d.]", tok):
            out[-1] = f"--gamma={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
