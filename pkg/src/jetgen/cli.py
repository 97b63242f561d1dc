"""Command-line interface.

Exit codes: 0 on success with zero failures, 2 when an experiment records
failures, 1 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .dsl import parse_map, pretty
from .errors import JetgenError
from .gdsm import cusp_count_experiment
from .harness import (
    ExperimentConfig,
    run_experiment,
    summarize,
    write_report,
)
from .singular import classify_point, find_singular_points, tb_symbol


def _load_map(arg):
    """A map argument is inline DSL source or a path to a file holding it."""
    text = arg
    if not arg.lstrip().startswith("map"):
        with open(arg, "r", encoding="utf-8") as fh:
            text = fh.read()
    return parse_map(text)


def _parse_point(text):
    return np.array([float(x) for x in text.split(",")])


def _parse_box(text):
    out = []
    for axis in text.split(","):
        lo, hi = axis.split(":")
        out.append((float(lo), float(hi)))
    return out


def _parse_matrix(text):
    return [[float(x) for x in row.split(",")] for row in text.split(";")]


def _cmd_parse(args):
    program = _load_map(args.map)
    print(pretty(program))
    print(f"inputs: {program.n_in}, outputs: {program.n_out}")
    return 0


def _cmd_classify(args):
    program = _load_map(args.map)
    sp = classify_point(program, _parse_point(args.at))
    print(f"classification: {sp.classification}")
    print(f"corank:         {sp.corank}")
    print(f"tb symbol:      {sp.tb_symbol}")
    print(f"margin:         {sp.margin:.6g}")
    return 0


def _cmd_tb(args):
    program = _load_map(args.map)
    symbol = tb_symbol(program, _parse_point(args.at), depth=args.depth)
    print(symbol)
    return 0


def _cmd_singular(args):
    program = _load_map(args.map)
    points = find_singular_points(program, _parse_box(args.box), args.grid)
    print(f"{len(points)} singular point(s)")
    for sp in points:
        loc = ", ".join(f"{x:+.9f}" for x in sp.location)
        print(f"  ({loc})  corank={sp.corank}  tb={sp.tb_symbol}  "
              f"{sp.classification}  margin={sp.margin:.3g}")
    return 0


def _cmd_gdsm_cusps(args):
    A = _parse_matrix(args.A)
    kwargs = {}
    if args.box:
        kwargs["box"] = _parse_box(args.box)
    results = cusp_count_experiment(A, args.samples, args.seed, grid=args.grid,
                                    sigma=args.sigma, **kwargs)
    failures = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"sample {r.index}: cusps={r.cusp_count} folds={r.fold_count} "
              f"cross_caps={r.cross_cap_count} other={r.other_count} "
              f"double_points={len(r.double_points)} [{status}]")
    print(f"{failures} failing sample(s) out of {len(results)}")
    return 0 if failures == 0 else 2


def _cmd_experiment_run(args):
    config = ExperimentConfig.load(args.config)
    report = run_experiment(config)
    if args.out:
        write_report(report, args.out, args.format)
        print(f"report written to {args.out}")
    print(f"samples: {report.aggregate['n_samples']}, failures: {report.failures}")
    allowed = config.allow_failures if args.allow_failures is None else args.allow_failures
    return 0 if report.failures <= allowed else 2


def _cmd_report_summarize(args):
    text, failures = summarize(args.path)
    print(text)
    return 0 if failures == 0 else 2


def build_parser():
    ap = argparse.ArgumentParser(
        prog="jetgen",
        description="Singularity detection for linearly perturbed smooth maps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a map source and print its canonical form")
    p.add_argument("map", help="DSL source text or a path to a file containing it")
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("classify", help="classify the germ of a map at a point")
    p.add_argument("map")
    p.add_argument("--at", required=True, help="comma-separated coordinates")
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("tb", help="Thom-Boardman symbol at a point")
    p.add_argument("map")
    p.add_argument("--at", required=True)
    p.add_argument("--depth", type=int, default=2, choices=(1, 2))
    p.set_defaults(fn=_cmd_tb)

    p = sub.add_parser("singular", help="detect singular points on a box")
    p.add_argument("map")
    p.add_argument("--box", required=True, help="lo:hi per axis, comma-separated")
    p.add_argument("--grid", type=int, default=32)
    p.set_defaults(fn=_cmd_singular)

    p = sub.add_parser("gdsm-cusps", help="distance-squared mapping experiments")
    p.add_argument("--A", required=True, help="matrix rows 'a,b;c,d'")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--box", default=None)
    p.set_defaults(fn=_cmd_gdsm_cusps)

    p = sub.add_parser("experiment", help="run a configured experiment")
    esub = p.add_subparsers(dest="subcommand", required=True)
    run_p = esub.add_parser("run")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--format", choices=("csv", "json"), default="json")
    run_p.add_argument("--allow-failures", type=int, default=None,
                       help="override the config's tolerated failure count")
    run_p.set_defaults(fn=_cmd_experiment_run)

    p = sub.add_parser("report", help="inspect a stored report")
    rsub = p.add_subparsers(dest="subcommand", required=True)
    sum_p = rsub.add_parser("summarize")
    sum_p.add_argument("path")
    sum_p.set_defaults(fn=_cmd_report_summarize)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except JetgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
