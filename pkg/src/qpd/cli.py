"""Command-line entry point: ``qpd {run,check,classify,oracle,sweep}``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import central, oracles, runner
from .config import load_config, parse_config
from .errors import QPDError

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _floats(text):
    return [float(v) for v in text.replace(",", ";").split(";") if v.strip()]


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="scenario file")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="overrides run.seed")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="do not echo the report")


def build_parser():
    parser = argparse.ArgumentParser(prog="qpd", description="Quantum potential dynamics scenarios.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    sub.add_parser("run", parents=[common], help="execute the scenario's run mode")
    sub.add_parser("check", parents=[common], help="run the invariant suite for a scenario")

    p = sub.add_parser("classify", parents=[common], help="trajectory family for constants (Etilde, C)")
    p.add_argument("--etilde", type=float)
    p.add_argument("--c", type=float, dest="C")

    p = sub.add_parser("oracle", parents=[common], help="closed-form trajectory and escape tables")
    p.add_argument("formula", choices=("free", "coherent", "escape"))
    p.add_argument("--x0", type=_floats, default=[0.0], help="';'-separated values")
    p.add_argument("--v0", type=_floats, default=[0.0], help="';'-separated values")
    p.add_argument("--t", type=_floats, default=[0.0], help="';'-separated times")
    p.add_argument("--a", type=float, default=1.0, help="coherent-state displacement")

    p = sub.add_parser("sweep", parents=[common], help="regime map over a grid in the (Etilde, C) plane")
    p.add_argument("--etilde-range", type=float, nargs=2, default=None, metavar=("MIN", "MAX"))
    p.add_argument("--c-range", type=float, nargs=2, default=None, metavar=("MIN", "MAX"))
    p.add_argument("--grid", type=int, default=None)
    return parser


def _load(args):
    if not args.config:
        raise QPDError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, run={**cfg.run, "seed": args.seed})
    return cfg


def _emit(report, cfg, args):
    path = runner.write_report(report, cfg, args.out)
    if not args.quiet:
        sys.stdout.write(report.text())
        sys.stdout.write(f"report: {path}\n")
    return report.exit_status


def _oracle_rows(args):
    rows = []
    for x0 in args.x0:
        for v0 in args.v0:
            if args.formula == "escape":
                rows.append((x0, v0))
                continue
            for t in args.t:
                rows.append((x0, v0, args.a, t) if args.formula == "coherent" else (x0, v0, t))
    return rows


def _oracle_csv(args):
    results = oracles.table(args.formula, _oracle_rows(args))
    header = {"free": "X0,V0,t,value", "coherent": "X0,V0,a,t,value", "escape": "X0,V0,crossing_time"}[args.formula]
    lines = [header]
    for res in results:
        lines.append(",".join(repr(v) for v in (*res.inputs, res.value)))
    return "\n".join(lines) + "\n"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args)
            return _emit(runner.run_scenario(cfg, args.out), cfg, args)
        if args.command == "check":
            cfg = _load(args)
            return _emit(runner.check_scenario(cfg, args.out), cfg, args)
        if args.command == "classify":
            if args.config:
                cfg = _load(args)
                cfg = replace(cfg, run={**cfg.run, "mode": "classify"})
                return _emit(runner.run_scenario(cfg, args.out), cfg, args)
            if args.etilde is None or args.C is None:
                parser.error("classify needs --etilde and --c, or --config")
            reg = central.classify(args.etilde, args.C)
            tr = "" if reg.turning_radius is None else repr(reg.turning_radius)
            sys.stdout.write(f"regime: {reg.name}\nturning_radius: {tr}\n")
            return EXIT_OK
        if args.command == "oracle":
            text = _oracle_csv(args)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                path = os.path.join(args.out, f"oracle_{args.formula}.csv")
                with open(path, "w", newline="") as fh:
                    fh.write(text)
                if not args.quiet:
                    sys.stdout.write(f"file: {path}\n")
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "sweep":
            if args.config:
                cfg = _load(args)
                run = {**cfg.run, "mode": "sweep"}
            else:
                cfg = parse_config("[run]\nmode = sweep\n")
                run = dict(cfg.run)
            if args.etilde_range:
                run["etilde_range"] = tuple(args.etilde_range)
            if args.c_range:
                run["c_range"] = tuple(args.c_range)
            if args.grid:
                run["grid"] = args.grid
            cfg = replace(cfg, run=run)
            return _emit(runner.run_scenario(cfg, args.out), cfg, args)
    except (QPDError, OSError) as exc:
        sys.stderr.write(f"qpd: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
