"""Scenario generation: ground-truth poses, trajectories, graphs, noisy ranges.

Defaults mirror the benchmark protocol this library reproduces: nodes live in
the square [1, 9]^2, four anchors sit at the inner corners, nodes wander
inside a unit box around where they started, and two nodes measure each
other's range only when closer than the communication radius.  Range noise is
zero-mean Gaussian with a standard deviation calibrated against the mean
inter-node distance through an SNR in decibels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose
from .multi_node import NetworkDataset, NetworkSnapshot, union_connected_targets
from .two_node import TwoNodeDataset

#: Mean distance of two uniform points in the default [1, 9]^2 area; the SNR
#: is defined against this reference even for 3-D variants of the same box.
MEAN_RANGE_REFERENCE = 4.1712

DEFAULT_AREA = (1.0, 9.0)

#: Default anchor layout for 2-D scenarios with four anchors.
CORNER_ANCHORS_2D = ((2.0, 2.0), (2.0, 8.0), (8.0, 2.0), (8.0, 8.0))


def sigma_from_snr(snr_db: float, d0: float = MEAN_RANGE_REFERENCE) -> float:
    """Noise standard deviation from ``SNR_dB = 10 log10(d0^2 / sigma^2)``.

    ``snr_db = inf`` means noiseless.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return d0 * 10.0 ** (-snr_db / 20.0)


@dataclass(frozen=True)
class Scenario:
    """Complete generative description of one experiment."""

    dim: int = 2
    area: tuple = DEFAULT_AREA
    tbar: int = 20
    snr_db: float = 20.0
    seed: int = 0
    n_targets: int = 1
    n_anchors: int = 1
    anchor_positions: tuple | None = None
    comm_radius: float = 1.0
    step: float = 0.5
    fixed_graph: bool = False
    kind: str = "two-node"

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        lo, hi = float(self.area[0]), float(self.area[1])
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid area bounds {self.area!r}")
        object.__setattr__(self, "area", (lo, hi))
        if self.tbar < 1:
            raise ValueError("tbar must be >= 1")
        if not (self.snr_db > 0.0):  # 0 dB or less: noise at signal level
            raise ValueError(
                f"snr_db must be positive (or inf for noiseless), got {self.snr_db}"
            )
        if self.n_targets < 1 or self.n_anchors < 1:
            raise ValueError("need at least one target and one anchor")
        if self.comm_radius <= 0.0:
            raise ValueError("comm_radius must be positive")
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.kind not in ("two-node", "network"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.anchor_positions is not None:
            pos = tuple(tuple(float(v) for v in p) for p in self.anchor_positions)
            if len(pos) != self.n_anchors or any(len(p) != self.dim for p in pos):
                raise ValueError("anchor_positions must list n_anchors points of length dim")
            object.__setattr__(self, "anchor_positions", pos)

    @property
    def sigma(self) -> float:
        return sigma_from_snr(self.snr_db)

    def resolved_anchors(self) -> np.ndarray:
        """Anchor layout, falling back to the corner default when it applies."""
        if self.anchor_positions is not None:
            return np.array(self.anchor_positions, dtype=float)
        if self.dim == 2 and self.n_anchors == 4:
            return np.array(CORNER_ANCHORS_2D)
        raise ValueError(
            "anchor_positions must be given explicitly unless dim=2 and n_anchors=4"
        )

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def trial_seeds(self, trials: int) -> list[np.random.SeedSequence]:
        """Independent per-trial seed material derived from the scenario seed."""
        return np.random.SeedSequence(self.seed).spawn(trials)


@dataclass(frozen=True)
class GroundTruth:
    """True poses and trajectories behind a generated dataset."""

    poses: tuple            # one Pose per target
    target_global: np.ndarray  # (n, tbar, d) true global positions

    def pose(self, i: int = 0) -> Pose:
        return self.poses[i]


def generate_two_node(scenario: Scenario,
                      rng: np.random.Generator | None = None):
    """Draw a two-node dataset: fresh uniform positions each slot.

    Local target positions are produced by pulling a uniform global point
    back through the true pose, so the mapped point always lies in the area.
    """
    rng = rng if rng is not None else scenario.rng()
    d = scenario.dim
    lo, hi = scenario.area
    truth_pose = Pose.random(d, rng)
    target_global = rng.uniform(lo, hi, size=(scenario.tbar, d))
    p_anchor = rng.uniform(lo, hi, size=(scenario.tbar, d))
    inv = truth_pose.inverse()
    p_local = target_global @ inv.rotation.T + inv.translation
    true_ranges = np.linalg.norm(target_global - p_anchor, axis=1)
    sigma = scenario.sigma
    noise = rng.normal(0.0, sigma, size=scenario.tbar) if sigma > 0 else np.zeros(scenario.tbar)
    ranges = np.maximum(true_ranges + noise, 0.0)
    dataset = TwoNodeDataset(
        times=np.arange(1, scenario.tbar + 1),
        p_local=p_local,
        p_anchor=p_anchor,
        ranges=ranges,
    )
    truth = GroundTruth(poses=(truth_pose,), target_global=target_global[None, :, :])
    return dataset, truth


def _walk(rng, start, lo, hi, step, tbar, d):
    """Random walk clamped to unit-box(start) intersected with the area.

    Steps are resampled until they land inside; the feasible region always
    contains the current point, so this terminates.
    """
    box_lo = np.maximum(start - 0.5, lo)
    box_hi = np.minimum(start + 0.5, hi)
    path = np.empty((tbar, d))
    path[0] = start
    for t in range(1, tbar):
        while True:
            candidate = path[t - 1] + rng.uniform(-step, step, size=d)
            if np.all(candidate >= box_lo) and np.all(candidate <= box_hi):
                path[t] = candidate
                break
    return path


def generate_network(scenario: Scenario,
                     rng: np.random.Generator | None = None):
    """Draw a multi-node dataset over time-varying proximity graphs.

    Every node (anchors included) wanders in the unit box around its initial
    position.  Both directions of a target-target pair get independent noise.
    With ``fixed_graph`` the edge set is frozen from the first slot while
    nodes keep moving.
    """
    rng = rng if rng is not None else scenario.rng()
    d, lo, hi = scenario.dim, *scenario.area
    n, r, tbar = scenario.n_targets, scenario.n_anchors, scenario.tbar
    anchors0 = scenario.resolved_anchors()
    if np.any(anchors0 < lo) or np.any(anchors0 > hi):
        raise ValueError("anchor positions must lie inside the area")
    poses = tuple(Pose.random(d, rng) for _ in range(n))
    target0 = rng.uniform(lo, hi, size=(n, d))
    target_paths = np.stack([
        _walk(rng, target0[i], lo, hi, scenario.step, tbar, d) for i in range(n)
    ])
    anchor_paths = np.stack([
        _walk(rng, anchors0[a], lo, hi, scenario.step, tbar, d) for a in range(r)
    ])
    sigma = scenario.sigma

    def noisy(true_range: float) -> float:
        if sigma == 0.0:
            return float(true_range)
        return float(max(true_range + rng.normal(0.0, sigma), 0.0))

    frozen_tt = frozen_ta = None
    snapshots = []
    for t in range(tbar):
        g = target_paths[:, t, :]
        ag = anchor_paths[:, t, :]
        if frozen_tt is None or not scenario.fixed_graph:
            tt_pairs = []
            for i in range(n):
                for j in range(i + 1, n):
                    if np.linalg.norm(g[i] - g[j]) <= scenario.comm_radius:
                        tt_pairs.append((i, j))
            ta_pairs = [
                (i, a)
                for i in range(n)
                for a in range(r)
                if np.linalg.norm(g[i] - ag[a]) <= scenario.comm_radius
            ]
            if scenario.fixed_graph:
                frozen_tt, frozen_ta = tt_pairs, ta_pairs
        else:
            tt_pairs, ta_pairs = frozen_tt, frozen_ta
        tt_edges, tt_ranges = [], []
        for i, j in tt_pairs:
            true_range = float(np.linalg.norm(g[i] - g[j]))
            tt_edges.append((i, j))
            tt_ranges.append(noisy(true_range))
            tt_edges.append((j, i))
            tt_ranges.append(noisy(true_range))
        ta_edges, ta_ranges = [], []
        for i, a in ta_pairs:
            ta_edges.append((i, a))
            ta_ranges.append(noisy(float(np.linalg.norm(g[i] - ag[a]))))
        # Local positions come from pulling the true path back through the pose.
        local = np.stack([
            poses[i].rotation.T @ (g[i] - poses[i].translation) for i in range(n)
        ])
        snapshots.append(NetworkSnapshot(
            t=t + 1,
            target_local=local,
            anchor_global=ag.copy(),
            tt_edges=np.array(tt_edges, dtype=int).reshape(-1, 2),
            tt_ranges=np.array(tt_ranges),
            ta_edges=np.array(ta_edges, dtype=int).reshape(-1, 2),
            ta_ranges=np.array(ta_ranges),
        ))
    dataset = NetworkDataset(tuple(snapshots))
    truth = GroundTruth(poses=poses, target_global=target_paths)
    return dataset, truth


def check_union_connectivity(data: NetworkDataset) -> np.ndarray:
    """Per-target flag: path to some anchor exists in the union graph."""
    return union_connected_targets(data)


def ta_measurement_counts(data: NetworkDataset) -> np.ndarray:
    """Total anchor measurements collected by each target across all slots."""
    counts = np.zeros(data.n_targets, dtype=int)
    for snap in data.snapshots:
        if len(snap.ta_edges):
            counts += np.bincount(snap.ta_edges[:, 0], minlength=data.n_targets)
    return counts


#: Upper bin edges mirroring the reported target-anchor measurement table.
TA_HISTOGRAM_BINS = (0, 5, 10, 15, 20)


def ta_histogram(counts: np.ndarray) -> dict[str, int]:
    """Bin targets by anchor-measurement count: 0, <=5, <=10, <=15, <=20, >20."""
    counts = np.asarray(counts)
    out = {"0": int((counts == 0).sum())}
    prev = 0
    for edge in TA_HISTOGRAM_BINS[1:]:
        out[f"<={edge}"] = int(((counts > prev) & (counts <= edge)).sum())
        prev = edge
    out[f">{prev}"] = int((counts > prev).sum())
    return out


# --- scenario config files ----------------------------------------------------

_SCENARIO_KEYS = {
    "kind": str, "dim": int, "tbar": int, "seed": int,
    "snr_db": float, "comm_radius": float, "step": float,
    "targets": int, "anchors": int, "fixed_graph": int,
}

_RENAME = {"targets": "n_targets", "anchors": "n_anchors"}


def save_scenario(scenario: Scenario, path) -> None:
    lines = [
        f"kind {scenario.kind}",
        f"dim {scenario.dim}",
        f"area {scenario.area[0]:.17g} {scenario.area[1]:.17g}",
        f"tbar {scenario.tbar}",
        f"snr_db {scenario.snr_db:.17g}",
        f"seed {scenario.seed}",
        f"targets {scenario.n_targets}",
        f"anchors {scenario.n_anchors}",
        f"comm_radius {scenario.comm_radius:.17g}",
        f"step {scenario.step:.17g}",
        f"fixed_graph {int(scenario.fixed_graph)}",
    ]
    if scenario.anchor_positions is not None:
        for p in scenario.anchor_positions:
            lines.append("anchor_pos " + " ".join(f"{v:.17g}" for v in p))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scenario(path) -> Scenario:
    """Parse the structured text config: one ``key value`` pair per line,
    ``#`` comments, repeated ``anchor_pos`` lines for the anchor layout."""
    kwargs: dict = {}
    anchor_positions = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        if key == "area":
            kwargs["area"] = (float(vals[0]), float(vals[1]))
        elif key == "anchor_pos":
            anchor_positions.append(tuple(float(v) for v in vals))
        elif key in _SCENARIO_KEYS:
            if len(vals) != 1:
                raise ValueError(f"{path}:{lineno}: {key} takes one value")
            kwargs[_RENAME.get(key, key)] = _SCENARIO_KEYS[key](vals[0])
        else:
            raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
    if anchor_positions:
        kwargs["anchor_positions"] = tuple(anchor_positions)
    if "fixed_graph" in kwargs:
        kwargs["fixed_graph"] = bool(kwargs["fixed_graph"])
    return Scenario(**kwargs)


def sec5c_scenario(**overrides) -> Scenario:
    """The dense-network preset: 110 targets, 4 corner anchors, radius 1,
    SNR 100 dB, 25 slots."""
    base = dict(
        kind="network", dim=2, n_targets=110, n_anchors=4,
        comm_radius=1.0, snr_db=100.0, tbar=25, seed=0,
    )
    base.update(overrides)
    return Scenario(**base)
