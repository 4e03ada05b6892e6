"""Benchmark command line: run scenarios, sweep settings, emit CSV reports.

Subcommands mirror the solver matrix: ``two-node-ppa``, ``two-node-rpa``,
``two-node-gd``, ``multi-ppa``, ``multi-jacobi``, ``dppa``, plus ``compare``
(several algorithms on identical per-trial datasets) and ``summarize``
(aggregate existing reports).  Exit codes: 0 success, 2 config error,
3 identifiability failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import bench
from .multi_node import IdentifiabilityError
from .simulate import Scenario, load_scenario, sec5c_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IDENTIFIABILITY = 3

_TWO_NODE_CMDS = {"two-node-ppa": "ppa", "two-node-rpa": "rpa", "two-node-gd": "gd"}
_NETWORK_CMDS = {"multi-ppa": "multi-ppa", "multi-jacobi": "multi-jacobi",
                 "dppa": "dppa"}


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="scenario config file")
    parser.add_argument("--seed", type=int, help="override scenario seed")
    parser.add_argument("--trials", type=int, default=1)
    parser.add_argument("--snr", type=float, dest="snr_db",
                        help="SNR in dB (inf for noiseless)")
    parser.add_argument("--tbar", type=int, help="number of time slots")
    parser.add_argument("--max-iters", type=int, default=1000)
    parser.add_argument("--out", type=Path, default=Path("runs"))
    parser.add_argument("--dim", type=int, help="override dimension (2 or 3)")
    parser.add_argument("--workers", type=int, default=1,
                        help="concurrent trial workers")
    parser.add_argument("--trace", action="store_true",
                        help="also write per-iteration objective traces")
    parser.add_argument("--rel-tol", type=float,
                        help="stop when the relative objective decrease drops below this")


def _add_network(parser):
    parser.add_argument("--preset", choices=["sec5c"],
                        help="start from a named scenario preset")
    parser.add_argument("--targets", type=int, help="number of target nodes")
    parser.add_argument("--anchors", type=int, help="number of anchor nodes")
    parser.add_argument("--radius", type=float, help="communication radius")
    parser.add_argument("--fixed-graph", action="store_true",
                        help="freeze the measurement graph at the first slot")
    parser.add_argument("--master", choices=["ls", "jacobi"], default="ls",
                        help="master update for multi-ppa")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangealign",
        description="Range-based coordinate alignment benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _TWO_NODE_CMDS:
        p = sub.add_parser(name, help=f"run the {name.split('-')[-1]} solver")
        _add_common(p)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--window", type=int, default=1,
                       help="smoothing window length (rpa)")
        p.add_argument("--discount", type=float, default=1.0,
                       help="discount factor in (0, 1] (rpa)")
        p.add_argument("--step-size", type=float, default=1e-3,
                       help="gradient stepsize (gd)")
    for name in _NETWORK_CMDS:
        p = sub.add_parser(name, help=f"run the {name} solver")
        _add_common(p)
        _add_network(p)
    p = sub.add_parser("compare", help="run several algorithms on the same data")
    p.add_argument("what", choices=["two-node", "multi"])
    _add_common(p)
    _add_network(p)
    p.add_argument("--algos", type=str,
                   help="comma-separated algorithm list "
                        "(default: ppa,rpa,gd or multi-ppa,multi-jacobi)")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--step-size", type=float, default=1e-3)
    p = sub.add_parser("summarize", help="aggregate existing trials.csv reports")
    p.add_argument("reports", nargs="+", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs"))
    return parser


def _scenario_from_args(args, kind: str) -> Scenario:
    if getattr(args, "preset", None) == "sec5c":
        scenario = sec5c_scenario()
    elif args.config is not None:
        scenario = load_scenario(args.config)
    else:
        scenario = Scenario(kind=kind) if kind == "two-node" else Scenario(
            kind="network", n_targets=10, n_anchors=4, comm_radius=2.0
        )
    updates: dict = {"kind": kind}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.snr_db is not None:
        updates["snr_db"] = math.inf if math.isinf(args.snr_db) else args.snr_db
    if args.tbar is not None:
        updates["tbar"] = args.tbar
    if args.dim is not None:
        updates["dim"] = args.dim
    if getattr(args, "targets", None) is not None:
        updates["n_targets"] = args.targets
    if getattr(args, "anchors", None) is not None:
        updates["n_anchors"] = args.anchors
    if getattr(args, "radius", None) is not None:
        updates["comm_radius"] = args.radius
    if getattr(args, "fixed_graph", False):
        updates["fixed_graph"] = True
    from dataclasses import replace
    return replace(scenario, **updates)


def _options_from_args(args) -> bench.SolverOptions:
    return bench.SolverOptions(
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        restarts=getattr(args, "restarts", 1),
        window=getattr(args, "window", 1),
        discount=getattr(args, "discount", 1.0),
        gd_step_size=getattr(args, "step_size", 1e-3),
        master=getattr(args, "master", "ls"),
    )


def _finish(report: bench.RunReport, out: Path, write_traces: bool) -> int:
    written = report.write(out, write_traces=write_traces)
    summary = bench.summarize(report.rows)
    summary_path = Path(out) / "summary.csv"
    bench.write_summary(summary, summary_path)
    written.append(summary_path)
    for row in summary:
        if row["stat"] == "mean":
            print(f"{row['algo']:12s} snr={row['snr_db']:g} tbar={row['tbar']} "
                  f"{row['metric']}: mean={row['value']:.6g} (n={row['count']})")
    for path in written:
        print(f"wrote {path}")
    if report.failures:
        for message in report.failures:
            print(f"identifiability: {message}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in _TWO_NODE_CMDS:
            scenario = _scenario_from_args(args, "two-node")
            report = bench.run_two_node(
                scenario, algos=(_TWO_NODE_CMDS[args.command],),
                trials=args.trials, options=_options_from_args(args),
                workers=args.workers, record_traces=args.trace,
            )
            return _finish(report, args.out, args.trace)
        if args.command in _NETWORK_CMDS:
            scenario = _scenario_from_args(args, "network")
            report = bench.run_network(
                scenario, algos=(_NETWORK_CMDS[args.command],),
                trials=args.trials, options=_options_from_args(args),
                workers=args.workers, record_traces=args.trace,
            )
            return _finish(report, args.out, args.trace)
        if args.command == "compare":
            if args.what == "two-node":
                scenario = _scenario_from_args(args, "two-node")
                algos = tuple((args.algos or "ppa,rpa,gd").split(","))
                report = bench.run_two_node(
                    scenario, algos=algos, trials=args.trials,
                    options=_options_from_args(args), workers=args.workers,
                    record_traces=args.trace,
                )
            else:
                scenario = _scenario_from_args(args, "network")
                algos = tuple((args.algos or "multi-ppa,multi-jacobi").split(","))
                report = bench.run_network(
                    scenario, algos=algos, trials=args.trials,
                    options=_options_from_args(args), workers=args.workers,
                    record_traces=args.trace,
                )
            return _finish(report, args.out, args.trace)
        if args.command == "summarize":
            rows = []
            for path in args.reports:
                rows.extend(bench.load_rows(path))
            summary = bench.summarize(rows)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            bench.write_summary(summary, out / "summary.csv")
            print(f"wrote {out / 'summary.csv'}")
            return EXIT_OK
        raise ValueError(f"unknown command {args.command!r}")
    except IdentifiabilityError as exc:
        print(f"identifiability failure: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
