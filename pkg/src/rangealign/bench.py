"""Monte-Carlo benchmark drivers and CSV reporting.

A run draws per-trial datasets from a scenario (independent child seeds),
solves them with the requested algorithms, and reports relative pose errors
computed by :mod:`rangealign.metrics` -- a code path independent of the
solvers.  Reports are byte-reproducible under a fixed config and seed except
for the ``wall_ms`` timing column.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import multi_node, two_node
from .metrics import pose_errors, position_error
from .multi_node import StoppingRule
from .simulate import (
    Scenario,
    generate_network,
    generate_two_node,
    ta_histogram,
    ta_measurement_counts,
)

CSV_COLUMNS = (
    "trial", "seed", "algo", "snr_db", "tbar", "node", "iter",
    "objective", "err_R", "err_T", "wall_ms",
)

TWO_NODE_ALGOS = ("ppa", "rpa", "gd")
NETWORK_ALGOS = ("multi-ppa", "multi-jacobi", "dppa")


@dataclass(frozen=True)
class SolverOptions:
    """Knobs forwarded to the individual solvers."""

    max_iters: int = 1000
    rel_tol: float | None = None
    restarts: int = 1
    window: int = 1
    discount: float = 1.0
    gd_step_size: float = 1e-3
    master: str = "ls"

    @property
    def stop(self) -> StoppingRule:
        return StoppingRule(max_iters=self.max_iters, rel_tol=self.rel_tol)


@dataclass
class RunReport:
    """Everything one benchmark run produced, before serialization."""

    scenario: Scenario
    rows: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)      # (algo, trial) -> ndarray
    target_rows: list = field(default_factory=list)  # network runs only
    ta_counts: np.ndarray | None = None
    failures: list = field(default_factory=list)     # identifiability messages

    def write(self, out_dir, write_traces: bool = False) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        trials_path = out_dir / "trials.csv"
        _write_csv(trials_path, CSV_COLUMNS, self.rows)
        written.append(trials_path)
        if write_traces and self.traces:
            rows = []
            for (algo, trial), trace in sorted(self.traces.items()):
                rows.extend(
                    {"trial": trial, "algo": algo, "iter": k, "objective": v}
                    for k, v in enumerate(trace)
                )
            trace_path = out_dir / "trace.csv"
            _write_csv(trace_path, ("trial", "algo", "iter", "objective"), rows)
            written.append(trace_path)
        if self.target_rows:
            targets_path = out_dir / "targets.csv"
            _write_csv(
                targets_path,
                ("trial", "algo", "node", "connected", "ta_count", "pos_err"),
                self.target_rows,
            )
            written.append(targets_path)
        if self.ta_counts is not None:
            hist_path = out_dir / "ta_histogram.csv"
            hist = ta_histogram(self.ta_counts)
            total = int(sum(hist.values()))
            _write_csv(
                hist_path,
                ("bin", "count", "percent"),
                [
                    {"bin": k, "count": v, "percent": 100.0 * v / total}
                    for k, v in hist.items()
                ],
            )
            written.append(hist_path)
        return written


def _fmt(value) -> str:
    if isinstance(value, float):
        if value != value:  # NaN
            return "nan"
        return f"{value:.12g}"
    return str(value)


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in columns])


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    # Stable scalar echo of the trial's seed material for the report.
    return int(seed_seq.generate_state(1, dtype=np.uint32)[0])


def _row(scenario, trial, seed, algo, node, iteration, objective, err_r, err_t,
         wall_ms):
    return {
        "trial": trial, "seed": seed, "algo": algo,
        "snr_db": float(scenario.snr_db), "tbar": scenario.tbar,
        "node": node, "iter": iteration, "objective": objective,
        "err_R": err_r, "err_T": err_t, "wall_ms": wall_ms,
    }


def _two_node_trial(payload):
    scenario, trial, algos, options, seed_seq = payload
    children = seed_seq.spawn(len(algos) + 1)
    dataset, truth = generate_two_node(scenario, rng=np.random.default_rng(children[0]))
    seed_echo = _seed_int(seed_seq)
    rows, traces = [], {}
    for algo, child in zip(algos, children[1:]):
        rng = np.random.default_rng(child)
        start = time.perf_counter()
        if algo == "ppa":
            if options.restarts > 1:
                state = two_node.ppa_solve_restarts(
                    dataset, restarts=options.restarts, stop=options.stop, rng=rng
                )
            else:
                state = two_node.ppa_solve(dataset, stop=options.stop, rng=rng)
            pose, objective = state.pose, state.objective
            iteration = state.iteration
            traces[(algo, trial)] = state.objective_trace
        elif algo == "rpa":
            state = two_node.rpa_run(
                dataset, rng=rng, window_size=options.window,
                discount=options.discount,
            )
            pose = state.pose
            objective = two_node.objective(pose, dataset)
            iteration = state.t
        elif algo == "gd":
            state = two_node.gd_solve(
                dataset, steps=options.max_iters,
                step_size=options.gd_step_size, rng=rng,
            )
            pose, objective = state.pose, state.objective
            iteration = state.iteration
            traces[(algo, trial)] = state.objective_trace
        else:
            raise ValueError(f"unknown two-node algorithm {algo!r}")
        wall_ms = 1e3 * (time.perf_counter() - start)
        err_r, err_t = pose_errors(pose, truth.pose(0))
        rows.append(_row(scenario, trial, seed_echo, algo, 0, iteration,
                         objective, err_r, err_t, wall_ms))
    return rows, traces, [], None, []


def _network_trial(payload):
    scenario, trial, algos, options, seed_seq = payload
    children = seed_seq.spawn(len(algos) + 1)
    data, truth = generate_network(scenario, rng=np.random.default_rng(children[0]))
    seed_echo = _seed_int(seed_seq)
    connected = multi_node.union_connected_targets(data)
    failures = []
    solve_data = data
    keep = np.arange(data.n_targets)
    if not connected.all():
        bad = np.nonzero(~connected)[0].tolist()
        failures.append(
            f"trial {trial}: targets {bad} not connected to any anchor; excluded"
        )
        keep = np.nonzero(connected)[0]
        solve_data = multi_node.restrict_targets(data, keep)
    counts = ta_measurement_counts(data)
    rows, traces, target_rows = [], {}, []
    if len(keep) == 0:
        for algo in algos:
            for i in range(data.n_targets):
                rows.append(_row(scenario, trial, seed_echo, algo, i, 0,
                                 float("nan"), float("nan"), float("nan"), 0.0))
                target_rows.append({
                    "trial": trial, "algo": algo, "node": i, "connected": 0,
                    "ta_count": int(counts[i]), "pos_err": float("nan"),
                })
        return rows, traces, target_rows, counts, failures
    for algo, child in zip(algos, children[1:]):
        rng = np.random.default_rng(child)
        start = time.perf_counter()
        if algo == "multi-ppa":
            state = multi_node.multi_ppa_solve(
                solve_data, stop=options.stop, rng=rng, master=options.master
            )
            poses, trace = state.poses, state.objective_trace
            iteration = state.iteration
        elif algo == "multi-jacobi":
            state = multi_node.multi_ppa_solve(
                solve_data, stop=options.stop, rng=rng, master="jacobi"
            )
            poses, trace = state.poses, state.objective_trace
            iteration = state.iteration
        elif algo == "dppa":
            result = multi_node.dppa_solve(
                solve_data, stop=options.stop, rng=rng, record_messages=False
            )
            poses, trace = result.poses, result.objective_trace
            iteration = result.rounds
        else:
            raise ValueError(f"unknown network algorithm {algo!r}")
        wall_ms = 1e3 * (time.perf_counter() - start)
        traces[(algo, trial)] = trace
        objective = float(trace[-1])
        est = {int(orig): poses.pose(k) for k, orig in enumerate(keep)}
        for i in range(data.n_targets):
            if i in est:
                err_r, err_t = pose_errors(est[i], truth.poses[i])
                p_local = np.stack([s.target_local[i] for s in data.snapshots])
                pos_err = position_error(est[i], p_local, truth.target_global[i])
            else:
                err_r = err_t = pos_err = float("nan")
            rows.append(_row(scenario, trial, seed_echo, algo, i, iteration,
                             objective, err_r, err_t, wall_ms))
            target_rows.append({
                "trial": trial, "algo": algo, "node": i,
                "connected": int(bool(connected[i])),
                "ta_count": int(counts[i]), "pos_err": pos_err,
            })
    return rows, traces, target_rows, counts, failures


def _run(scenario, algos, trials, options, kind, workers=1,
         record_traces=False) -> RunReport:
    payloads = [
        (scenario, trial, tuple(algos), options, seed_seq)
        for trial, seed_seq in enumerate(scenario.trial_seeds(trials))
    ]
    trial_fn = _two_node_trial if kind == "two-node" else _network_trial
    report = RunReport(scenario=scenario)
    total_counts = None
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(trial_fn, payloads))
    else:
        results = [trial_fn(p) for p in payloads]
    for rows, traces, target_rows, counts, failures in results:
        report.rows.extend(rows)
        if record_traces:
            report.traces.update(traces)
        report.target_rows.extend(target_rows)
        report.failures.extend(failures)
        if counts is not None:
            total_counts = counts if total_counts is None else total_counts + counts
    report.ta_counts = total_counts
    return report


def run_two_node(scenario: Scenario, algos=("ppa",), trials: int = 1,
                 options: SolverOptions | None = None, workers: int = 1,
                 record_traces: bool = False) -> RunReport:
    """Monte-Carlo run of two-node solvers; all algorithms see the same
    per-trial dataset."""
    unknown = set(algos) - set(TWO_NODE_ALGOS)
    if unknown:
        raise ValueError(f"unknown two-node algorithms: {sorted(unknown)}")
    return _run(scenario, algos, trials, options or SolverOptions(),
                "two-node", workers, record_traces)


def run_network(scenario: Scenario, algos=("multi-ppa",), trials: int = 1,
                options: SolverOptions | None = None, workers: int = 1,
                record_traces: bool = False) -> RunReport:
    """Monte-Carlo run of network solvers.

    Targets with no path to an anchor in the union graph are excluded from
    the solve, reported with NaN errors, and surfaced in ``report.failures``.
    """
    unknown = set(algos) - set(NETWORK_ALGOS)
    if unknown:
        raise ValueError(f"unknown network algorithms: {sorted(unknown)}")
    if "dppa" in algos and not scenario.fixed_graph:
        raise ValueError("dppa requires a fixed-graph scenario (fixed_graph 1)")
    return _run(scenario, algos, trials, options or SolverOptions(),
                "network", workers, record_traces)


# --- aggregation ---------------------------------------------------------------

SUMMARY_COLUMNS = ("algo", "snr_db", "tbar", "metric", "stat", "value", "count")

_STATS = (
    ("mean", np.mean),
    ("median", np.median),
    ("q10", lambda v: np.quantile(v, 0.10)),
    ("q90", lambda v: np.quantile(v, 0.90)),
)


def summarize(rows) -> list[dict]:
    """Aggregate trial rows into long-format per-cell statistics.

    Cells are (algo, snr_db, tbar); NaN errors (excluded targets) are
    dropped per metric.  Rows from multiple reports pool together.
    """
    cells: dict = {}
    for row in rows:
        key = (row["algo"], float(row["snr_db"]), int(row["tbar"]))
        cell = cells.setdefault(key, {"err_R": [], "err_T": []})
        for metric in ("err_R", "err_T"):
            value = float(row[metric])
            if value == value:
                cell[metric].append(value)
    out = []
    for (algo, snr_db, tbar), metrics in sorted(cells.items()):
        for metric, values in metrics.items():
            arr = np.asarray(values)
            for stat, fn in _STATS:
                out.append({
                    "algo": algo, "snr_db": snr_db, "tbar": tbar,
                    "metric": metric, "stat": stat,
                    "value": float(fn(arr)) if len(arr) else float("nan"),
                    "count": len(arr),
                })
    return out


def load_rows(path) -> list[dict]:
    """Read a trials.csv back into row dictionaries."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary(rows, path) -> None:
    _write_csv(path, SUMMARY_COLUMNS, rows)


def summary_value(summary_rows, algo, metric, stat, snr_db=None, tbar=None):
    """Pull one aggregated number out of summarize() output."""
    for row in summary_rows:
        if row["algo"] != algo or row["metric"] != metric or row["stat"] != stat:
            continue
        if snr_db is not None and float(row["snr_db"]) != float(snr_db):
            continue
        if tbar is not None and int(row["tbar"]) != int(tbar):
            continue
        return row["value"]
    raise KeyError(f"no summary row for {algo}/{metric}/{stat}")
