"""Single target / single anchor alignment solvers.

Three estimators for the pose of one GPS-denied node against one anchor:

* a batch solver alternating per-measurement sphere projections with a
  closed-form orthogonal-Procrustes pose update (objective never increases);
* a recursive solver touching each measurement once, carrying running means
  and a correlation matrix, with optional smoothing window and discounting;
* a projected-gradient baseline that descends on the rotation only and
  refreshes the translation by the closed form.

The batch solver's inner loop runs on a compiled kernel when available; see
``rangealign._kernels``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .geometry import (
    Pose,
    SphereSurface,
    project_onto_rotation_group,
    project_onto_sphere,
    project_onto_spheres,
)

#: Below this many 3-D range measurements the pose is not identifiable.
MIN_RECORDS_3D = 7


@dataclass(frozen=True)
class MeasurementRecord:
    """One time slot: local position, anchor global position, measured range."""

    t: int
    p_local: np.ndarray
    p_anchor: np.ndarray
    range: float

    def __post_init__(self):
        p_local = np.asarray(self.p_local, dtype=float)
        p_anchor = np.asarray(self.p_anchor, dtype=float)
        if p_local.shape != p_anchor.shape or p_local.ndim != 1:
            raise ValueError("p_local and p_anchor must be vectors of equal length")
        rng = float(self.range)
        if not math.isfinite(rng) or rng < 0.0:
            raise ValueError(f"range must be finite and >= 0, got {rng}")
        object.__setattr__(self, "p_local", p_local)
        object.__setattr__(self, "p_anchor", p_anchor)
        object.__setattr__(self, "range", rng)

    @property
    def sphere(self) -> SphereSurface:
        """Constraint surface induced by this measurement."""
        return SphereSurface(self.p_anchor, self.range)


@dataclass(frozen=True)
class TwoNodeDataset:
    """Time-ordered measurements for one target/anchor pair, stored columnar."""

    times: np.ndarray
    p_local: np.ndarray
    p_anchor: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=int)
        p_local = np.ascontiguousarray(self.p_local, dtype=float)
        p_anchor = np.ascontiguousarray(self.p_anchor, dtype=float)
        ranges = np.ascontiguousarray(self.ranges, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("dataset must contain at least one record")
        tbar = len(times)
        if p_local.shape != (tbar, p_local.shape[1]) or p_local.shape != p_anchor.shape:
            raise ValueError("position arrays must both have shape (tbar, d)")
        if ranges.shape != (tbar,):
            raise ValueError("ranges must have shape (tbar,)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("time indices must be strictly increasing")
        if not (np.all(np.isfinite(p_local)) and np.all(np.isfinite(p_anchor))
                and np.all(np.isfinite(ranges))):
            raise ValueError("dataset entries must be finite")
        if np.any(ranges < 0.0):
            raise ValueError("ranges must be >= 0")
        d = p_local.shape[1]
        if d not in (2, 3):
            raise ValueError(f"unsupported dimension {d}")
        if d == 3 and tbar < MIN_RECORDS_3D:
            warnings.warn(
                f"{tbar} range measurements may not identify a 3-D pose "
                f"(at least {MIN_RECORDS_3D} needed)",
                stacklevel=2,
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p_local", p_local)
        object.__setattr__(self, "p_anchor", p_anchor)
        object.__setattr__(self, "ranges", ranges)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.p_local.shape[1]

    def record(self, idx: int) -> MeasurementRecord:
        return MeasurementRecord(
            int(self.times[idx]), self.p_local[idx], self.p_anchor[idx],
            float(self.ranges[idx]),
        )

    def records(self) -> list[MeasurementRecord]:
        return [self.record(i) for i in range(len(self))]

    @classmethod
    def from_records(cls, records) -> "TwoNodeDataset":
        records = list(records)
        if not records:
            raise ValueError("dataset must contain at least one record")
        return cls(
            times=np.array([r.t for r in records]),
            p_local=np.stack([r.p_local for r in records]),
            p_anchor=np.stack([r.p_anchor for r in records]),
            ranges=np.array([r.range for r in records]),
        )

    def save(self, path) -> None:
        """Write the line-oriented text format: header ``dim d`` then
        one ``t p_l... p_g... r`` record per line."""
        lines = [f"dim {self.dim}"]
        for i in range(len(self)):
            fields = [str(int(self.times[i]))]
            fields += [f"{v:.17g}" for v in self.p_local[i]]
            fields += [f"{v:.17g}" for v in self.p_anchor[i]]
            fields.append(f"{self.ranges[i]:.17g}")
            lines.append(" ".join(fields))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TwoNodeDataset":
        dim = None
        times, p_local, p_anchor, ranges = [], [], [], []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if dim is None:
                if parts[0] != "dim" or len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'dim d' header")
                dim = int(parts[1])
                continue
            if len(parts) != 2 * dim + 2:
                raise ValueError(
                    f"{path}:{lineno}: expected {2 * dim + 2} fields, got {len(parts)}"
                )
            times.append(int(parts[0]))
            vals = [float(v) for v in parts[1:]]
            p_local.append(vals[:dim])
            p_anchor.append(vals[dim:2 * dim])
            ranges.append(vals[2 * dim])
        if dim is None:
            raise ValueError(f"{path}: missing 'dim d' header")
        return cls(np.array(times), np.array(p_local), np.array(p_anchor),
                   np.array(ranges))


@dataclass(frozen=True)
class StoppingRule:
    """Iteration budget plus an optional relative-decrease cutoff."""

    max_iters: int = 1000
    rel_tol: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol is not None and self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be positive when given")


def objective(pose: Pose, dataset: TwoNodeDataset) -> float:
    """Sum of squared range residuals ``(r(t) - ||R p_l(t) + T - p_g(t)||)^2``."""
    est = dataset.p_local @ pose.rotation.T + pose.translation
    residual = dataset.ranges - np.linalg.norm(est - dataset.p_anchor, axis=1)
    return float(residual @ residual)


def ppa_project_step(pose: Pose, dataset: TwoNodeDataset) -> np.ndarray:
    """Project every mapped local point onto its measurement sphere.

    Independent across time slots; this is the data-parallel half of the
    batch iteration.
    """
    points = dataset.p_local @ pose.rotation.T + pose.translation
    return project_onto_spheres(dataset.p_anchor, dataset.ranges, points)


class MasterUpdate(NamedTuple):
    pose: Pose
    degenerate: bool


def _local_points_degenerate(p_local: np.ndarray) -> bool:
    # All-identical local points make the rotation unidentifiable.
    p_bar = p_local.mean(axis=0)
    spread = float(np.abs(p_local - p_bar).max(initial=0.0))
    return spread <= 1e-12 * (1.0 + float(np.abs(p_bar).max(initial=0.0)))


def ppa_master_update(
    surface_points: np.ndarray,
    dataset: TwoNodeDataset,
    fallback_rotation: np.ndarray | None = None,
) -> MasterUpdate:
    """Exact minimizer of the pose given fixed surface points.

    Centers both point clouds, projects their correlation matrix onto the
    rotation group, and recovers the translation from the means.  When all
    local points coincide the rotation is unidentifiable: the fallback
    rotation (identity by default) is kept and the result is flagged.
    """
    y = np.asarray(surface_points, dtype=float)
    if y.shape != dataset.p_local.shape:
        raise ValueError("surface_points must have one point per record")
    y_bar = y.mean(axis=0)
    p_bar = dataset.p_local.mean(axis=0)
    degenerate = _local_points_degenerate(dataset.p_local)
    if degenerate:
        rotation = np.eye(dataset.dim) if fallback_rotation is None else fallback_rotation
    else:
        corr = (y - y_bar).T @ (dataset.p_local - p_bar)
        rotation = project_onto_rotation_group(corr)
    translation = y_bar - rotation @ p_bar
    return MasterUpdate(Pose(rotation, translation), degenerate)


@dataclass(frozen=True)
class PpaState:
    """Batch-solver result: pose, consistent surface points, objective trace."""

    pose: Pose
    surface_points: np.ndarray
    iteration: int
    objective: float
    objective_trace: np.ndarray
    degenerate: bool = False


def ppa_solve(
    dataset: TwoNodeDataset,
    init: Pose | None = None,
    stop: StoppingRule | None = None,
    rng: np.random.Generator | None = None,
    backend: str | None = None,
) -> PpaState:
    """Run the batch solver from ``init`` (random pose when omitted).

    ``objective_trace[k]`` is the objective after ``k`` pose updates; the
    trace is non-increasing.  The returned surface points are re-projected
    under the final pose.
    """
    stop = stop or StoppingRule()
    if init is None:
        rng = rng if rng is not None else np.random.default_rng()
        init = Pose.random(dataset.dim, rng)
    if init.dim != dataset.dim:
        raise ValueError("initial pose dimension does not match dataset")
    rotation, translation, y, trace, iters, degenerate = _kernels.ppa_run(
        dataset.p_local,
        dataset.p_anchor,
        dataset.ranges,
        init.rotation,
        init.translation,
        stop.max_iters,
        stop.rel_tol if stop.rel_tol is not None else 0.0,
        backend=backend,
    )
    return PpaState(
        pose=Pose(rotation, translation),
        surface_points=y,
        iteration=iters,
        objective=float(trace[-1]),
        objective_trace=trace,
        degenerate=degenerate,
    )


def ppa_solve_restarts(
    dataset: TwoNodeDataset,
    restarts: int = 5,
    stop: StoppingRule | None = None,
    rng: np.random.Generator | None = None,
    backend: str | None = None,
) -> PpaState:
    """Best of ``restarts`` random initializations by final objective."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    best: PpaState | None = None
    for _ in range(restarts):
        state = ppa_solve(dataset, stop=stop, rng=rng, backend=backend)
        if best is None or state.objective < best.objective:
            best = state
    return best


@dataclass(frozen=True)
class RpaState:
    """Recursive-solver state after ``t`` measurements.

    ``mean_y``, ``mean_p`` and ``corr`` are the running mean surface point,
    mean local point and their correlation matrix.  ``window`` keeps the last
    ``window_size`` (surface point, local point, sphere) triples, most recent
    last, for the smoothed update.  With ``discount`` < 1 the running averages
    weight recent measurements geometrically.
    """

    pose: Pose
    mean_y: np.ndarray
    mean_p: np.ndarray
    corr: np.ndarray
    t: int
    window: tuple = ()
    window_size: int = 1
    discount: float = 1.0
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.pose.dim


def rpa_init(
    dim: int,
    init: Pose | None = None,
    rng: np.random.Generator | None = None,
    window_size: int = 1,
    discount: float = 1.0,
) -> RpaState:
    """Fresh recursive state: zero means/correlation, random pose by default."""
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    if not 0.0 < discount <= 1.0:
        raise ValueError("discount must lie in (0, 1]")
    if init is None:
        rng = rng if rng is not None else np.random.default_rng()
        init = Pose.random(dim, rng)
    if init.dim != dim:
        raise ValueError("initial pose dimension mismatch")
    return RpaState(
        pose=init,
        mean_y=np.zeros(dim),
        mean_p=np.zeros(dim),
        corr=np.zeros((dim, dim)),
        t=0,
        window=(),
        window_size=window_size,
        discount=discount,
    )


def _rpa_gain(t: int, discount: float) -> float:
    if discount == 1.0:
        return 1.0 / t
    return (1.0 - discount) / (1.0 - discount ** t)


def _rpa_ingest(state: RpaState, record: MeasurementRecord):
    """Project the new measurement and update running statistics and window."""
    if record.p_local.shape[0] != state.dim:
        raise ValueError("record dimension does not match state")
    t = state.t + 1
    sphere = record.sphere
    y = project_onto_sphere(sphere, state.pose.apply(record.p_local))
    gain = _rpa_gain(t, state.discount)
    mean_y = state.mean_y + gain * (y - state.mean_y)
    mean_p = state.mean_p + gain * (record.p_local - state.mean_p)
    corr = state.corr + (1.0 - gain) * np.outer(
        y - state.mean_y, record.p_local - state.mean_p
    )
    window = (state.window + ((y, record.p_local.copy(), sphere),))[-state.window_size:]
    return t, mean_y, mean_p, corr, window


def _pose_from_stats(mean_y, mean_p, corr, prev_rotation):
    degenerate = not np.any(corr)
    rotation = prev_rotation if degenerate else project_onto_rotation_group(corr)
    return Pose(rotation, mean_y - rotation @ mean_p), degenerate


def rpa_step(state: RpaState, record: MeasurementRecord) -> RpaState:
    """Absorb one measurement: single projection, recursive stats, new pose.

    With unit discount the running statistics equal their batch definitions
    over all processed records.  The first step leaves the correlation at
    zero (single point), so the initial rotation is kept and flagged.
    """
    t, mean_y, mean_p, corr, window = _rpa_ingest(state, record)
    pose, degenerate = _pose_from_stats(mean_y, mean_p, corr, state.pose.rotation)
    return RpaState(
        pose=pose, mean_y=mean_y, mean_p=mean_p, corr=corr, t=t,
        window=window, window_size=state.window_size, discount=state.discount,
        degenerate=degenerate,
    )


def rpa_smoothed_step(
    state: RpaState, record: MeasurementRecord, b: int | None = None
) -> RpaState:
    """Recursive step that re-projects the last ``b`` surface points.

    The buffered points (current one included) are re-projected with the
    pre-update pose; their deviations shift the running mean and correlation
    used for the pose extraction only -- the stored statistics keep the
    original projections.  ``b = 1`` reduces exactly to :func:`rpa_step`
    because the fresh point re-projects to itself.
    """
    b = state.window_size if b is None else b
    if b < 1 or b > state.window_size:
        raise ValueError(f"b must lie in [1, window_size={state.window_size}]")
    prev_pose = state.pose
    t, mean_y, mean_p, corr, window = _rpa_ingest(state, record)
    tail = window[-min(b, len(window)):]
    deltas = np.stack([
        project_onto_sphere(sph, prev_pose.apply(p)) - y for y, p, sph in tail
    ])
    delta_bar = deltas.sum(axis=0) / t
    p_tail = np.stack([p for _, p, _ in tail])
    corr_eff = corr + (deltas - delta_bar).T @ (p_tail - mean_p)
    pose, degenerate = _pose_from_stats(
        mean_y + delta_bar, mean_p, corr_eff, prev_pose.rotation
    )
    return RpaState(
        pose=pose, mean_y=mean_y, mean_p=mean_p, corr=corr, t=t,
        window=window, window_size=state.window_size, discount=state.discount,
        degenerate=degenerate,
    )


def rpa_run(
    dataset: TwoNodeDataset,
    init: Pose | None = None,
    rng: np.random.Generator | None = None,
    window_size: int = 1,
    discount: float = 1.0,
) -> RpaState:
    """Feed a whole dataset through the recursive solver, one step per record."""
    state = rpa_init(dataset.dim, init=init, rng=rng,
                     window_size=window_size, discount=discount)
    step = rpa_step if window_size == 1 else rpa_smoothed_step
    for i in range(len(dataset)):
        state = step(state, dataset.record(i))
    return state


def gd_gradient_rotation(pose: Pose, dataset: TwoNodeDataset) -> np.ndarray:
    """Analytic gradient of the objective with respect to the rotation entries.

    Each slot contributes ``-2 (r - n)/n * z p'`` with ``z = R p + T - p_g``
    and ``n = ||z||``; slots with ``n = 0`` are skipped (the norm is not
    differentiable there and the subgradient choice 0 is used).
    """
    z = dataset.p_local @ pose.rotation.T + pose.translation - dataset.p_anchor
    n = np.linalg.norm(z, axis=1)
    ok = n > 0.0
    coeff = np.zeros_like(n)
    coeff[ok] = -2.0 * (dataset.ranges[ok] - n[ok]) / n[ok]
    return (coeff[:, None] * z).T @ dataset.p_local


def gd_baseline_step(pose: Pose, dataset: TwoNodeDataset, step: float) -> Pose:
    """One projected-gradient step on the rotation.

    The Euclidean gradient is projected onto the tangent space of the
    rotation group, ``M_T(R) = (M - R M' R) / 2``, and the stepped matrix is
    projected back.  The translation is refreshed by the closed form against
    the current sphere projections.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    grad = gd_gradient_rotation(pose, dataset)
    r = pose.rotation
    tangent = 0.5 * (grad - r @ grad.T @ r)
    rotation = project_onto_rotation_group(r - step * tangent)
    y = ppa_project_step(pose, dataset)
    translation = y.mean(axis=0) - rotation @ dataset.p_local.mean(axis=0)
    return Pose(rotation, translation)


@dataclass(frozen=True)
class GdState:
    pose: Pose
    iteration: int
    objective: float
    objective_trace: np.ndarray


def gd_solve(
    dataset: TwoNodeDataset,
    init: Pose | None = None,
    steps: int = 1000,
    step_size: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> GdState:
    """Gradient-descent baseline with a constant stepsize."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if init is None:
        rng = rng if rng is not None else np.random.default_rng()
        init = Pose.random(dataset.dim, rng)
    pose = init
    trace = np.empty(steps + 1)
    trace[0] = objective(pose, dataset)
    for k in range(1, steps + 1):
        pose = gd_baseline_step(pose, dataset, step_size)
        trace[k] = objective(pose, dataset)
    return GdState(pose=pose, iteration=steps, objective=float(trace[-1]),
                   objective_trace=trace)
