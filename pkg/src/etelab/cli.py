"""Command-line experiment runner.

Subcommands: run, verify, pareto, compare, plotdata. Set ETE_LOG to control
log verbosity (DEBUG/INFO/WARNING/ERROR).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .analysis import compare, emit_plotdata, pareto, verify_bounds
from .core import nats_to_bits
from .errors import EteLabError
from .sweep import ExperimentConfig, run_sweep


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etelab",
        description="Run decoding-scheduler sweeps against exact oracles and "
        "verify the bits-to-rounds accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a sweep described by a JSON config")
    run_p.add_argument("config", help="experiment config JSON file")
    run_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run_p.add_argument(
        "--oracle-endpoint",
        default=None,
        help="decode against a remote ete-oracle/1 server instead of the suite oracles",
    )

    verify_p = sub.add_parser("verify", help="check bound margins and slope trends")
    verify_p.add_argument("results", help="sweep output directory")

    pareto_p = sub.add_parser("pareto", help="print the quality/passes frontier")
    pareto_p.add_argument("results")
    pareto_p.add_argument("--metric", default="exact_match")

    cmp_p = sub.add_parser("compare", help="forward-pass reduction of B vs A at matched quality")
    cmp_p.add_argument("results_a")
    cmp_p.add_argument("results_b")
    cmp_p.add_argument("--metric", default="exact_match")

    plot_p = sub.add_parser("plotdata", help="emit CSV series for plotting")
    plot_p.add_argument("results")
    plot_p.add_argument("--metric", default="exact_match")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ETE_LOG", "WARNING").upper())
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except EteLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = ExperimentConfig.from_json(args.config)
        if args.seed is not None:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
        out = args.out or cfg.out
        if out is None:
            print("error: no output directory (--out or config 'out')", file=sys.stderr)
            return 2
        summary = run_sweep(cfg, out, jobs=args.jobs, endpoint=args.oracle_endpoint)
        print(
            f"{summary['runs']} runs over {summary['cells']} cells -> {summary['out']} "
            f"({len(summary['failures'])} failures)"
        )
        for failure in summary["failures"]:
            print(f"  failed {failure['run_id']}: {failure['error']}", file=sys.stderr)
        return 0 if not summary["failures"] else 1

    if args.command == "verify":
        summary = verify_bounds(args.results)
        print(f"bound runs: {summary.n_bound_runs}, passed: {summary.n_passed}")
        if summary.worst_margin is not None:
            print(f"worst margin: {summary.worst_margin:.3e}")
        for f in sorted(summary.slopes):
            s = summary.slopes[f]
            desc = "undefined" if s is None else f"{s:.4f} rounds/nat"
            print(f"  f={f}: slope {desc}")
        for v in summary.violations:
            print(
                f"  VIOLATION {v['run_id']} margin={v['margin']:.3e} round={v['round']}",
                file=sys.stderr,
            )
        print("verdict:", "ok" if summary.ok else "FAILED")
        return 0 if summary.ok else 1

    if args.command == "pareto":
        points = pareto(args.results, metric=args.metric)
        print(f"cell_id  {args.metric:>12}  rounds  passes  runs")
        for p in points:
            print(
                f"{p.cell_id:7d}  {p.metric:12.4f}  {p.rounds:6.2f}  "
                f"{p.forward_passes:6.2f}  {p.n_runs:4d}"
            )
        return 0

    if args.command == "compare":
        report = compare(args.results_a, args.results_b, metric=args.metric)
        for p in report.pairs:
            print(
                f"cell {p.cell_a} vs {p.cell_b}: {report.metric} "
                f"{p.metric_a:.4f} vs {p.metric_b:.4f}, passes "
                f"{p.passes_a:.2f} -> {p.passes_b:.2f}, reduction "
                f"{p.reduction_pct:.1f}% [{p.ci_low:.1f}%, {p.ci_high:.1f}%]"
            )
        print(f"mean forward-pass reduction: {report.mean_reduction_pct:.1f}%")
        return 0

    if args.command == "plotdata":
        info = emit_plotdata(args.results, metric=args.metric)
        print(f"{info['rows']} rows -> {info['plotdata']}: {', '.join(info['files'])}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
