"""Multi-target alignment over time-varying measurement graphs.

Estimates one pose per target from target-target and target-anchor ranges.
Every iteration projects all edge displacements onto their measurement
spheres, then refreshes the poses by one of two masters:

* ``ls``   -- a constrained least-squares step: solve the unconstrained
  block-sparse normal equations for per-target matrices ``Z_i`` and
  translations, then project each ``Z_i`` onto the rotation group;
* ``jacobi`` -- a per-target closed form with neighbor poses frozen, the
  same mean/correlation update the two-node master uses.

The Jacobi master admits a distributed implementation on fixed graphs where
each node exchanges only poses with its neighbors; it is reproduced here as
synchronous message-passing rounds that match the centralized iteration
bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import (
    Pose,
    is_rotation,
    project_onto_rotation_group,
    project_onto_spheres,
    random_rotation,
)
from .two_node import StoppingRule

#: Networks smaller than this solve the normal equations densely.
DENSE_SOLVER_MAX_TARGETS = 10

#: Condition number beyond which the dense normal equations are rejected.
CONDITION_LIMIT = 1e12


class IdentifiabilityError(RuntimeError):
    """Raised when the data cannot pin down every requested pose."""

    def __init__(self, message: str, targets=()):
        super().__init__(message)
        self.targets = tuple(targets)


def _edge_array(edges, n_rows_name: str) -> np.ndarray:
    arr = np.asarray(edges, dtype=int).reshape(-1, 2)
    if arr.size and arr.min() < 0:
        raise ValueError(f"{n_rows_name} indices must be >= 0")
    return arr


@dataclass(frozen=True)
class NetworkSnapshot:
    """All positions and range measurements taken at one time slot.

    Target-target edges are directed: ``(i, j, d_ij)`` is node i's own
    measurement of the distance to j, and the reverse edge carries node j's
    independently noisy reading, so both directions are stored.  Adjacency is
    symmetric: ``(i, j)`` present implies ``(j, i)`` present.
    """

    t: int
    target_local: np.ndarray
    anchor_global: np.ndarray
    tt_edges: np.ndarray
    tt_ranges: np.ndarray
    ta_edges: np.ndarray
    ta_ranges: np.ndarray

    def __post_init__(self):
        target_local = np.ascontiguousarray(self.target_local, dtype=float)
        anchor_global = np.ascontiguousarray(self.anchor_global, dtype=float)
        if target_local.ndim != 2 or anchor_global.ndim != 2:
            raise ValueError("positions must be (count, d) arrays")
        tt_edges = _edge_array(self.tt_edges, "tt edge")
        ta_edges = _edge_array(self.ta_edges, "ta edge")
        tt_ranges = np.ascontiguousarray(self.tt_ranges, dtype=float).reshape(-1)
        ta_ranges = np.ascontiguousarray(self.ta_ranges, dtype=float).reshape(-1)
        if len(tt_ranges) != len(tt_edges) or len(ta_ranges) != len(ta_edges):
            raise ValueError("edge and range arrays must have matching lengths")
        n = target_local.shape[0]
        r = anchor_global.shape[0]
        if tt_edges.size and (tt_edges.max() >= n):
            raise ValueError("tt edge index out of range")
        if ta_edges.size and (ta_edges[:, 0].max() >= n or ta_edges[:, 1].max() >= r):
            raise ValueError("ta edge index out of range")
        if tt_edges.size and np.any(tt_edges[:, 0] == tt_edges[:, 1]):
            raise ValueError("tt self-edges are not allowed")
        pairs = set(map(tuple, tt_edges))
        if any((j, i) not in pairs for i, j in pairs):
            raise ValueError("tt adjacency must be symmetric")
        if len(pairs) != len(tt_edges):
            raise ValueError("duplicate tt edges")
        if np.any(tt_ranges < 0.0) or np.any(ta_ranges < 0.0):
            raise ValueError("ranges must be >= 0")
        object.__setattr__(self, "target_local", target_local)
        object.__setattr__(self, "anchor_global", anchor_global)
        object.__setattr__(self, "tt_edges", tt_edges)
        object.__setattr__(self, "tt_ranges", tt_ranges)
        object.__setattr__(self, "ta_edges", ta_edges)
        object.__setattr__(self, "ta_ranges", ta_ranges)

    @property
    def n_targets(self) -> int:
        return self.target_local.shape[0]

    @property
    def n_anchors(self) -> int:
        return self.anchor_global.shape[0]

    @property
    def dim(self) -> int:
        return self.target_local.shape[1]


@dataclass(frozen=True)
class NetworkDataset:
    """Fixed node set observed over strictly increasing time slots."""

    snapshots: tuple

    def __post_init__(self):
        snapshots = tuple(self.snapshots)
        if not snapshots:
            raise ValueError("dataset must contain at least one snapshot")
        first = snapshots[0]
        for snap in snapshots[1:]:
            if (snap.n_targets, snap.n_anchors, snap.dim) != (
                first.n_targets, first.n_anchors, first.dim
            ):
                raise ValueError("node counts and dimension must be fixed over time")
        times = [snap.t for snap in snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        object.__setattr__(self, "snapshots", snapshots)

    @property
    def n_targets(self) -> int:
        return self.snapshots[0].n_targets

    @property
    def n_anchors(self) -> int:
        return self.snapshots[0].n_anchors

    @property
    def dim(self) -> int:
        return self.snapshots[0].dim

    @property
    def tbar(self) -> int:
        return len(self.snapshots)

    def save(self, path) -> None:
        """Header ``dim/targets/anchors`` then per snapshot: ``t``, target and
        anchor position lines, and ``tt i j d`` / ``ta i a r`` edge lines."""
        out = [f"dim {self.dim}", f"targets {self.n_targets}",
               f"anchors {self.n_anchors}"]
        for snap in self.snapshots:
            out.append(f"t {snap.t}")
            for i, p in enumerate(snap.target_local):
                out.append("target %d %s" % (i, " ".join(f"{v:.17g}" for v in p)))
            for a, p in enumerate(snap.anchor_global):
                out.append("anchor %d %s" % (a, " ".join(f"{v:.17g}" for v in p)))
            for (i, j), rng in zip(snap.tt_edges, snap.tt_ranges):
                out.append(f"tt {i} {j} {rng:.17g}")
            for (i, a), rng in zip(snap.ta_edges, snap.ta_ranges):
                out.append(f"ta {i} {a} {rng:.17g}")
        Path(path).write_text("\n".join(out) + "\n")

    @classmethod
    def load(cls, path) -> "NetworkDataset":
        dim = n = r = None
        snapshots = []
        current = None

        def close(snap_dict):
            target_local = np.full((n, dim), np.nan)
            anchor_global = np.full((r, dim), np.nan)
            for i, p in snap_dict["targets"].items():
                target_local[i] = p
            for a, p in snap_dict["anchors"].items():
                anchor_global[a] = p
            if np.isnan(target_local).any() or np.isnan(anchor_global).any():
                raise ValueError(f"{path}: snapshot t={snap_dict['t']} is missing positions")
            snapshots.append(NetworkSnapshot(
                t=snap_dict["t"],
                target_local=target_local,
                anchor_global=anchor_global,
                tt_edges=snap_dict["tt_edges"],
                tt_ranges=snap_dict["tt_ranges"],
                ta_edges=snap_dict["ta_edges"],
                ta_ranges=snap_dict["ta_ranges"],
            ))

        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0]
            if key == "dim":
                dim = int(parts[1])
            elif key == "targets":
                n = int(parts[1])
            elif key == "anchors":
                r = int(parts[1])
            elif key == "t":
                if None in (dim, n, r):
                    raise ValueError(f"{path}:{lineno}: header incomplete before first snapshot")
                if current is not None:
                    close(current)
                current = {"t": int(parts[1]), "targets": {}, "anchors": {},
                           "tt_edges": [], "tt_ranges": [],
                           "ta_edges": [], "ta_ranges": []}
            elif current is None:
                raise ValueError(f"{path}:{lineno}: data before first 't' line")
            elif key == "target":
                current["targets"][int(parts[1])] = [float(v) for v in parts[2:]]
            elif key == "anchor":
                current["anchors"][int(parts[1])] = [float(v) for v in parts[2:]]
            elif key == "tt":
                current["tt_edges"].append((int(parts[1]), int(parts[2])))
                current["tt_ranges"].append(float(parts[3]))
            elif key == "ta":
                current["ta_edges"].append((int(parts[1]), int(parts[2])))
                current["ta_ranges"].append(float(parts[3]))
            else:
                raise ValueError(f"{path}:{lineno}: unknown line kind {key!r}")
        if current is None:
            raise ValueError(f"{path}: no snapshots found")
        close(current)
        return cls(tuple(snapshots))


@dataclass
class PoseSet:
    """One pose per target, stored stacked for vectorized evaluation."""

    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self):
        self.rotations = np.ascontiguousarray(self.rotations, dtype=float)
        self.translations = np.ascontiguousarray(self.translations, dtype=float)
        n, d = self.translations.shape
        if self.rotations.shape != (n, d, d):
            raise ValueError("rotations must have shape (n, d, d)")
        for i in range(n):
            if not is_rotation(self.rotations[i]):
                raise ValueError(f"entry {i} is not a rotation matrix")

    @property
    def n_targets(self) -> int:
        return self.translations.shape[0]

    @property
    def dim(self) -> int:
        return self.translations.shape[1]

    def pose(self, i: int) -> Pose:
        return Pose(self.rotations[i], self.translations[i])

    def poses(self) -> list[Pose]:
        return [self.pose(i) for i in range(self.n_targets)]

    def copy(self) -> "PoseSet":
        return PoseSet(self.rotations.copy(), self.translations.copy())

    @classmethod
    def from_poses(cls, poses) -> "PoseSet":
        poses = list(poses)
        return cls(np.stack([p.rotation for p in poses]),
                   np.stack([p.translation for p in poses]))

    @classmethod
    def identity(cls, n: int, dim: int) -> "PoseSet":
        return cls(np.broadcast_to(np.eye(dim), (n, dim, dim)).copy(),
                   np.zeros((n, dim)))

    @classmethod
    def random(cls, n: int, dim: int, rng: np.random.Generator,
               translation_scale: float = 1.0) -> "PoseSet":
        return cls(
            np.stack([random_rotation(dim, rng) for _ in range(n)]),
            rng.uniform(-translation_scale, translation_scale, size=(n, dim)),
        )


@dataclass(frozen=True)
class ProjectionSet:
    """Per-snapshot edge projections: one surface point per directed edge."""

    y_tt: tuple
    y_ta: tuple


class EdgeProjections(NamedTuple):
    y_tt: np.ndarray
    y_ta: np.ndarray


def _global_positions(poses: PoseSet, snap: NetworkSnapshot) -> np.ndarray:
    return (
        np.einsum("nde,ne->nd", poses.rotations, snap.target_local)
        + poses.translations
    )


def multi_objective(poses: PoseSet, data: NetworkDataset) -> float:
    """Sum of squared range residuals over every directed edge and time slot."""
    if poses.n_targets != data.n_targets or poses.dim != data.dim:
        raise ValueError("pose set does not match dataset")
    total = 0.0
    for snap in data.snapshots:
        g = _global_positions(poses, snap)
        if len(snap.tt_edges):
            diff = g[snap.tt_edges[:, 0]] - g[snap.tt_edges[:, 1]]
            res = snap.tt_ranges - np.linalg.norm(diff, axis=1)
            total += float(res @ res)
        if len(snap.ta_edges):
            diff = g[snap.ta_edges[:, 0]] - snap.anchor_global[snap.ta_edges[:, 1]]
            res = snap.ta_ranges - np.linalg.norm(diff, axis=1)
            total += float(res @ res)
    return total


def project_edges(poses: PoseSet, snap: NetworkSnapshot) -> EdgeProjections:
    """Project every edge displacement onto its measurement sphere.

    Target-target spheres are centered at the origin with radius ``d_ij(t)``;
    target-anchor spheres at the anchor position with radius ``r_ia(t)``.
    Independent per edge.
    """
    g = _global_positions(poses, snap)
    d = snap.dim
    if len(snap.tt_edges):
        diff = g[snap.tt_edges[:, 0]] - g[snap.tt_edges[:, 1]]
        y_tt = project_onto_spheres(np.zeros_like(diff), snap.tt_ranges, diff)
    else:
        y_tt = np.zeros((0, d))
    if len(snap.ta_edges):
        centers = snap.anchor_global[snap.ta_edges[:, 1]]
        y_ta = project_onto_spheres(centers, snap.ta_ranges, g[snap.ta_edges[:, 0]])
    else:
        y_ta = np.zeros((0, d))
    return EdgeProjections(y_tt, y_ta)


def project_all(poses: PoseSet, data: NetworkDataset) -> ProjectionSet:
    slices = [project_edges(poses, snap) for snap in data.snapshots]
    return ProjectionSet(tuple(s.y_tt for s in slices), tuple(s.y_ta for s in slices))


def _basis_matrix(p: np.ndarray) -> np.ndarray:
    # B = [I_d (x) p', I_d]: B @ [Z.ravel(); T] = Z @ p + T
    d = p.shape[0]
    return np.hstack([np.kron(np.eye(d), p[None, :]), np.eye(d)])


@dataclass(frozen=True)
class NormalEquations:
    """Block form of the stacked least-squares system.

    ``blocks[i, j]`` is the (i, j) pose-pair block of the Gram matrix summed
    over time; blocks of never-adjacent pairs stay exactly zero.  ``rhs[i]``
    stacks ``[yhat (x) p_i; yhat]`` contributions.  ``anchored[i]`` records
    whether target i ever measured an anchor directly.
    """

    blocks: np.ndarray
    rhs: np.ndarray
    dim: int
    coupled: np.ndarray
    anchored: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[2]

    def dense(self) -> np.ndarray:
        n, D = self.n_targets, self.block_size
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * D, n * D)

    def rhs_vector(self) -> np.ndarray:
        return self.rhs.reshape(-1)


def _assemble_gram(data: NetworkDataset):
    n, d = data.n_targets, data.dim
    D = d * d + d
    blocks = np.zeros((n, n, D, D))
    coupled = np.eye(n, dtype=bool)
    anchored = np.zeros(n, dtype=bool)
    for snap in data.snapshots:
        basis = np.stack([_basis_matrix(p) for p in snap.target_local])
        tt_count = np.bincount(snap.tt_edges[:, 0], minlength=n) if len(snap.tt_edges) else np.zeros(n, int)
        ta_count = np.bincount(snap.ta_edges[:, 0], minlength=n) if len(snap.ta_edges) else np.zeros(n, int)
        anchored |= ta_count > 0
        weight = 2 * tt_count + ta_count
        for i in np.nonzero(weight)[0]:
            blocks[i, i] += weight[i] * (basis[i].T @ basis[i])
        for (i, j) in snap.tt_edges:
            blocks[i, j] -= 2.0 * (basis[i].T @ basis[j])
            coupled[i, j] = True
    return blocks, coupled, anchored


def _assemble_rhs(proj: ProjectionSet, data: NetworkDataset) -> np.ndarray:
    n, d = data.n_targets, data.dim
    rhs = np.zeros((n, d * d + d))
    for snap, y_tt, y_ta in zip(data.snapshots, proj.y_tt, proj.y_ta):
        yhat = np.zeros((n, d))
        if len(snap.tt_edges):
            np.add.at(yhat, snap.tt_edges[:, 0], y_tt)
            np.subtract.at(yhat, snap.tt_edges[:, 1], y_tt)
        if len(snap.ta_edges):
            np.add.at(yhat, snap.ta_edges[:, 0], y_ta)
        rhs[:, : d * d] += (yhat[:, :, None] * snap.target_local[:, None, :]).reshape(n, d * d)
        rhs[:, d * d:] += yhat
    return rhs


def assemble_normal_equations(proj: ProjectionSet, data: NetworkDataset) -> NormalEquations:
    """Build the normal equations block-wise, never forming the stacked
    measurement matrix densely."""
    blocks, coupled, anchored = _assemble_gram(data)
    rhs = _assemble_rhs(proj, data)
    return NormalEquations(blocks=blocks, rhs=rhs, dim=data.dim,
                           coupled=coupled, anchored=anchored)


def _unanchored_targets(coupled: np.ndarray, anchored: np.ndarray) -> list[int]:
    # Connected components of the coupling graph that contain no anchored
    # target have a free translation gauge.
    n = len(anchored)
    seen = np.zeros(n, dtype=bool)
    bad: list[int] = []
    adj = coupled | coupled.T
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        component = []
        seen[start] = True
        while stack:
            u = stack.pop()
            component.append(u)
            for v in np.nonzero(adj[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        if not anchored[component].any():
            bad.extend(component)
    return sorted(bad)


class LsSolution(NamedTuple):
    mixing: np.ndarray       # (n, d, d) unconstrained per-target matrices
    translations: np.ndarray  # (n, d)


def _check_identifiable(blocks, coupled, anchored):
    n = blocks.shape[0]
    isolated = [i for i in range(n) if not blocks[i, i].any()]
    if isolated:
        raise IdentifiabilityError(
            f"targets without any measurements: {isolated}", targets=isolated
        )
    unanchored = _unanchored_targets(coupled, anchored)
    if unanchored:
        raise IdentifiabilityError(
            "targets not connected to any anchor in the union graph: "
            f"{unanchored}", targets=unanchored,
        )


def _build_solver(blocks, coupled):
    """Factor the Gram matrix once and return a solve callable.

    Dense LU below :data:`DENSE_SOLVER_MAX_TARGETS` targets (with a condition
    check), block-sparse LU above.
    """
    n, D = blocks.shape[0], blocks.shape[2]
    if n < DENSE_SOLVER_MAX_TARGETS:
        dense = blocks.transpose(0, 2, 1, 3).reshape(n * D, n * D)
        cond = np.linalg.cond(dense)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise IdentifiabilityError(
                f"normal equations are ill-conditioned (cond={cond:.3g})"
            )
        lu = scipy.linalg.lu_factor(dense)
        return lambda rhs: scipy.linalg.lu_solve(lu, rhs)
    symmetric = coupled | coupled.T
    mat = sp.bmat(
        [[sp.csc_matrix(blocks[i, j]) if symmetric[i, j] else None
          for j in range(n)] for i in range(n)],
        format="csc",
    )
    try:
        factor = splu(mat)
    except RuntimeError as exc:
        raise IdentifiabilityError(f"sparse factorization failed: {exc}") from exc

    def solve(rhs):
        x = factor.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise IdentifiabilityError("sparse solve produced non-finite entries")
        return x

    return solve


def solve_unconstrained_ls(ne: NormalEquations) -> LsSolution:
    """Solve the normal equations and split the stacked solution per target.

    Raises :class:`IdentifiabilityError` naming the offending targets when a
    target has no measurements at all, when a coupling component contains no
    anchored target, or when the system is numerically singular.
    """
    n, D, d = ne.n_targets, ne.block_size, ne.dim
    _check_identifiable(ne.blocks, ne.coupled, ne.anchored)
    x = _build_solver(ne.blocks, ne.coupled)(ne.rhs_vector())
    x = x.reshape(n, D)
    return LsSolution(x[:, : d * d].reshape(n, d, d).copy(), x[:, d * d:].copy())


class _LsMaster:
    """Caches the Gram factorization: it depends on positions and graphs only,
    not on the projections, so it is shared by every iteration."""

    def __init__(self, data: NetworkDataset):
        self.data = data
        blocks, coupled, anchored = _assemble_gram(data)
        _check_identifiable(blocks, coupled, anchored)
        self._solve = _build_solver(blocks, coupled)

    def update(self, proj: ProjectionSet) -> PoseSet:
        data = self.data
        n, d = data.n_targets, data.dim
        rhs = _assemble_rhs(proj, data)
        x = self._solve(rhs.reshape(-1)).reshape(n, d * d + d)
        mixing = x[:, : d * d].reshape(n, d, d)
        translations = x[:, d * d:].copy()
        rotations = np.empty_like(mixing)
        for i in range(n):
            rotations[i] = project_onto_rotation_group(mixing[i])
        return PoseSet(rotations, translations)


# --- Jacobi master -----------------------------------------------------------

@dataclass
class _NodeData:
    """Static per-target observation arrays, one row per (time, edge) pair."""

    index: int
    neighbor_ids: np.ndarray  # (deg,) global ids of tt neighbors
    tt_p: np.ndarray          # (m, d) own local position per tt observation
    tt_slot: np.ndarray       # (m,) local slot of the neighbor in neighbor_ids
    tt_pj: np.ndarray         # (m, d) neighbor local position per observation
    tt_r: np.ndarray          # (m,)
    ta_p: np.ndarray          # (k, d)
    ta_center: np.ndarray     # (k, d) anchor global positions
    ta_r: np.ndarray          # (k,)
    p_bar: np.ndarray         # (d,) observation-weighted mean of own positions
    n_obs: int
    degenerate: bool


def _jacobi_precompute(data: NetworkDataset) -> list[_NodeData]:
    n, d = data.n_targets, data.dim
    tt_p = [[] for _ in range(n)]
    tt_nbr = [[] for _ in range(n)]
    tt_pj = [[] for _ in range(n)]
    tt_r = [[] for _ in range(n)]
    ta_p = [[] for _ in range(n)]
    ta_center = [[] for _ in range(n)]
    ta_r = [[] for _ in range(n)]
    for snap in data.snapshots:
        for (i, j), rng in zip(snap.tt_edges, snap.tt_ranges):
            tt_p[i].append(snap.target_local[i])
            tt_nbr[i].append(j)
            tt_pj[i].append(snap.target_local[j])
            tt_r[i].append(rng)
        for (i, a), rng in zip(snap.ta_edges, snap.ta_ranges):
            ta_p[i].append(snap.target_local[i])
            ta_center[i].append(snap.anchor_global[a])
            ta_r[i].append(rng)
    nodes = []
    for i in range(n):
        nbr = np.array(sorted(set(tt_nbr[i])), dtype=int)
        slot_of = {j: s for s, j in enumerate(nbr)}
        own = np.array(tt_p[i] + ta_p[i]).reshape(-1, d)
        n_obs = own.shape[0]
        if n_obs:
            p_bar = own.mean(axis=0)
            spread = float(np.abs(own - p_bar).max(initial=0.0))
            degenerate = spread <= 1e-12 * (1.0 + float(np.abs(p_bar).max(initial=0.0)))
        else:
            p_bar = np.zeros(d)
            degenerate = True
        nodes.append(_NodeData(
            index=i,
            neighbor_ids=nbr,
            tt_p=np.array(tt_p[i]).reshape(-1, d),
            tt_slot=np.array([slot_of[j] for j in tt_nbr[i]], dtype=int),
            tt_pj=np.array(tt_pj[i]).reshape(-1, d),
            tt_r=np.array(tt_r[i], dtype=float),
            ta_p=np.array(ta_p[i]).reshape(-1, d),
            ta_center=np.array(ta_center[i]).reshape(-1, d),
            ta_r=np.array(ta_r[i], dtype=float),
            p_bar=p_bar,
            n_obs=n_obs,
            degenerate=degenerate,
        ))
    return nodes


def _node_closed_form(nd: _NodeData, own_rot, own_trans, nbr_rot, nbr_trans):
    """Exact minimizer of one target's summands with neighbor poses frozen.

    Target-target terms fold the frozen neighbor position into the surface
    point (``y_ij + R_j p_j + T_j``), after which the problem has the same
    mean/correlation closed form as the two-node master.
    """
    if nd.n_obs == 0 or nd.degenerate:
        return own_rot, own_trans, True
    own_tt = nd.tt_p @ own_rot.T + own_trans
    nbr_global = (
        np.einsum("ode,oe->od", nbr_rot[nd.tt_slot], nd.tt_pj)
        + nbr_trans[nd.tt_slot]
    )
    diff = own_tt - nbr_global
    y_tt = project_onto_spheres(np.zeros_like(diff), nd.tt_r, diff)
    y_breve = y_tt + nbr_global
    own_ta = nd.ta_p @ own_rot.T + own_trans
    y_ta = project_onto_spheres(nd.ta_center, nd.ta_r, own_ta)
    y_bar = (y_breve.sum(axis=0) + y_ta.sum(axis=0)) / nd.n_obs
    corr = (y_breve - y_bar).T @ (nd.tt_p - nd.p_bar)
    corr += (y_ta - y_bar).T @ (nd.ta_p - nd.p_bar)
    rotation = project_onto_rotation_group(corr)
    translation = y_bar - rotation @ nd.p_bar
    return rotation, translation, False


class JacobiUpdate(NamedTuple):
    pose: Pose
    degenerate: bool


def jacobi_update(i: int, poses: PoseSet, proj: ProjectionSet,
                  data: NetworkDataset) -> JacobiUpdate:
    """Closed-form refresh of target ``i`` from precomputed edge projections.

    Neighbor poses stay at their current values; with no observations at all
    the pose is kept and flagged.
    """
    d = data.dim
    y_breve_sum = np.zeros(d)
    y_ta_sum = np.zeros(d)
    rows = []  # (y-like point, own local position) pairs for the correlation
    n_obs = 0
    p_sum = np.zeros(d)
    for snap, y_tt, y_ta in zip(data.snapshots, proj.y_tt, proj.y_ta):
        for e, (a, b) in enumerate(snap.tt_edges):
            if a != i:
                continue
            nbr_global = poses.rotations[b] @ snap.target_local[b] + poses.translations[b]
            breve = y_tt[e] + nbr_global
            rows.append((breve, snap.target_local[i]))
            y_breve_sum += breve
            p_sum += snap.target_local[i]
            n_obs += 1
        for e, (a, _) in enumerate(snap.ta_edges):
            if a != i:
                continue
            rows.append((y_ta[e], snap.target_local[i]))
            y_ta_sum += y_ta[e]
            p_sum += snap.target_local[i]
            n_obs += 1
    if n_obs == 0:
        return JacobiUpdate(poses.pose(i), True)
    p_bar = p_sum / n_obs
    y_bar = (y_breve_sum + y_ta_sum) / n_obs
    points = np.array([p for _, p in rows])
    spread = float(np.abs(points - p_bar).max(initial=0.0))
    if spread <= 1e-12 * (1.0 + float(np.abs(p_bar).max(initial=0.0))):
        return JacobiUpdate(poses.pose(i), True)
    corr = np.zeros((d, d))
    for y, p in rows:
        corr += np.outer(y - y_bar, p - p_bar)
    rotation = project_onto_rotation_group(corr)
    return JacobiUpdate(Pose(rotation, y_bar - rotation @ p_bar), False)


def jacobi_iterate(poses: PoseSet, data: NetworkDataset,
                   _pre: list[_NodeData] | None = None) -> PoseSet:
    """One synchronous Jacobi sweep: every target refreshed from the same
    incoming pose set."""
    pre = _pre if _pre is not None else _jacobi_precompute(data)
    n = data.n_targets
    rotations = np.empty_like(poses.rotations)
    translations = np.empty_like(poses.translations)
    for i in range(n):
        nd = pre[i]
        rot, trans, _ = _node_closed_form(
            nd, poses.rotations[i], poses.translations[i],
            poses.rotations[nd.neighbor_ids], poses.translations[nd.neighbor_ids],
        )
        rotations[i] = rot
        translations[i] = trans
    return PoseSet(rotations, translations)


# --- solver drivers ----------------------------------------------------------

@dataclass(frozen=True)
class MultiState:
    """Solver result: final poses plus the per-iteration objective trace."""

    poses: PoseSet
    iteration: int
    objective: float
    objective_trace: np.ndarray


def _init_poses(data: NetworkDataset, init, rng) -> PoseSet:
    if init is not None:
        if init.n_targets != data.n_targets or init.dim != data.dim:
            raise ValueError("initial pose set does not match dataset")
        return init.copy()
    rng = rng if rng is not None else np.random.default_rng()
    return PoseSet.random(data.n_targets, data.dim, rng)


def ppa_multi_iterate(poses: PoseSet, data: NetworkDataset,
                      master: str = "ls") -> PoseSet:
    """One full iteration: project all edges, then refresh every pose."""
    proj = project_all(poses, data)
    if master == "ls":
        return _LsMaster(data).update(proj)
    if master == "jacobi":
        return jacobi_iterate(poses, data)
    raise ValueError(f"unknown master {master!r}")


def _run_iterations(data, poses, stop, step):
    trace = np.empty(stop.max_iters + 1)
    trace[0] = multi_objective(poses, data)
    iters = 0
    for k in range(1, stop.max_iters + 1):
        poses = step(poses)
        trace[k] = multi_objective(poses, data)
        iters = k
        if stop.rel_tol is not None and (
            trace[k - 1] - trace[k] <= stop.rel_tol * max(trace[k - 1], 1e-30)
        ):
            break
    return poses, iters, trace[: iters + 1].copy()


def multi_ppa_solve(
    data: NetworkDataset,
    init: PoseSet | None = None,
    stop: StoppingRule | None = None,
    rng: np.random.Generator | None = None,
    master: str = "ls",
) -> MultiState:
    """Centralized solver over the whole dataset.

    ``master='ls'`` uses the constrained least-squares step (the default);
    ``master='jacobi'`` uses the per-target closed form.
    """
    stop = stop or StoppingRule()
    poses = _init_poses(data, init, rng)
    if master == "ls":
        ls = _LsMaster(data)
        step = lambda ps: ls.update(project_all(ps, data))
    elif master == "jacobi":
        pre = _jacobi_precompute(data)
        step = lambda ps: jacobi_iterate(ps, data, _pre=pre)
    else:
        raise ValueError(f"unknown master {master!r}")
    poses, iters, trace = _run_iterations(data, poses, stop, step)
    return MultiState(poses=poses, iteration=iters, objective=float(trace[-1]),
                      objective_trace=trace)


def restrict_targets(data: NetworkDataset, indices) -> NetworkDataset:
    """Sub-network over the given targets: edges touching dropped targets are
    removed and the remaining target indices are remapped to 0..len-1."""
    indices = np.asarray(indices, dtype=int)
    remap = {int(old): new for new, old in enumerate(indices)}
    snapshots = []
    for snap in data.snapshots:
        tt_keep = [
            (remap[int(i)], remap[int(j)], rng)
            for (i, j), rng in zip(snap.tt_edges, snap.tt_ranges)
            if int(i) in remap and int(j) in remap
        ]
        ta_keep = [
            (remap[int(i)], int(a), rng)
            for (i, a), rng in zip(snap.ta_edges, snap.ta_ranges)
            if int(i) in remap
        ]
        snapshots.append(NetworkSnapshot(
            t=snap.t,
            target_local=snap.target_local[indices],
            anchor_global=snap.anchor_global,
            tt_edges=np.array([(i, j) for i, j, _ in tt_keep], dtype=int).reshape(-1, 2),
            tt_ranges=np.array([rng for *_, rng in tt_keep]),
            ta_edges=np.array([(i, a) for i, a, _ in ta_keep], dtype=int).reshape(-1, 2),
            ta_ranges=np.array([rng for *_, rng in ta_keep]),
        ))
    return NetworkDataset(tuple(snapshots))


def union_connected_targets(data: NetworkDataset) -> np.ndarray:
    """Per-target flag: connected to some anchor in the union graph."""
    n = data.n_targets
    coupled = np.eye(n, dtype=bool)
    anchored = np.zeros(n, dtype=bool)
    for snap in data.snapshots:
        for (i, j) in snap.tt_edges:
            coupled[i, j] = True
        if len(snap.ta_edges):
            anchored[np.unique(snap.ta_edges[:, 0])] = True
    bad = set(_unanchored_targets(coupled, anchored))
    return np.array([i not in bad for i in range(n)])


# --- distributed implementation ----------------------------------------------

def _fixed_graph_or_raise(data: NetworkDataset):
    first_tt = set(map(tuple, data.snapshots[0].tt_edges))
    first_ta = set(map(tuple, data.snapshots[0].ta_edges))
    for snap in data.snapshots[1:]:
        if set(map(tuple, snap.tt_edges)) != first_tt or \
           set(map(tuple, snap.ta_edges)) != first_ta:
            raise ValueError(
                "the distributed solver requires a fixed graph; "
                "this dataset's edge set changes over time"
            )


class DppaNode:
    """One target's state machine: static observation data, own pose, and the
    latest pose heard from each neighbor."""

    __slots__ = ("data", "rotation", "translation", "nbr_rotations", "nbr_translations")

    def __init__(self, node_data: _NodeData, rotation, translation):
        self.data = node_data
        self.rotation = np.array(rotation, dtype=float)
        self.translation = np.array(translation, dtype=float)
        deg = len(node_data.neighbor_ids)
        d = self.translation.shape[0]
        self.nbr_rotations = np.zeros((deg, d, d))
        self.nbr_translations = np.zeros((deg, d))

    def receive(self, sender: int, rotation, translation):
        slot = int(np.searchsorted(self.data.neighbor_ids, sender))
        self.nbr_rotations[slot] = rotation
        self.nbr_translations[slot] = translation

    def compute(self):
        return _node_closed_form(
            self.data, self.rotation, self.translation,
            self.nbr_rotations, self.nbr_translations,
        )


@dataclass(frozen=True)
class DppaResult:
    poses: PoseSet
    rounds: int
    objective: float
    objective_trace: np.ndarray
    message_log: tuple
    unanchored_targets: tuple


def dppa_round(nodes: list[DppaNode], message_log=None, round_index: int = 0):
    """One synchronous round: all nodes compute from the poses they hold,
    then broadcast the refreshed pose to their neighbors."""
    updates = [node.compute() for node in nodes]
    for node, (rot, trans, _) in zip(nodes, updates):
        node.rotation = rot
        node.translation = trans
    for i, node in enumerate(nodes):
        for j in node.data.neighbor_ids:
            nodes[j].receive(i, node.rotation, node.translation)
            if message_log is not None:
                message_log.append((round_index, i, int(j)))
    return nodes


def dppa_solve(
    data: NetworkDataset,
    init: PoseSet | None = None,
    stop: StoppingRule | None = None,
    rng: np.random.Generator | None = None,
    record_messages: bool = True,
) -> DppaResult:
    """Distributed Jacobi solver on a fixed graph.

    Synchronous lockstep rounds with reliable in-order delivery; after ``k``
    rounds the poses equal the centralized Jacobi iteration ``k`` exactly.
    Targets in components without an anchor are flagged: their poses drift.
    """
    _fixed_graph_or_raise(data)
    stop = stop or StoppingRule()
    poses = _init_poses(data, init, rng)
    pre = _jacobi_precompute(data)
    unanchored = tuple(np.nonzero(~union_connected_targets(data))[0].tolist())
    if unanchored:
        warnings.warn(
            f"targets {list(unanchored)} are not connected to any anchor; "
            "their poses will drift", stacklevel=2,
        )
    nodes = [DppaNode(pre[i], poses.rotations[i], poses.translations[i])
             for i in range(data.n_targets)]
    log = [] if record_messages else None
    # Initial broadcast so every node holds its neighbors' starting poses.
    for i, node in enumerate(nodes):
        for j in node.data.neighbor_ids:
            nodes[j].receive(i, node.rotation, node.translation)
            if log is not None:
                log.append((0, i, int(j)))

    def gather() -> PoseSet:
        return PoseSet(np.stack([nd.rotation for nd in nodes]),
                       np.stack([nd.translation for nd in nodes]))

    trace = np.empty(stop.max_iters + 1)
    trace[0] = multi_objective(gather(), data)
    rounds = 0
    for k in range(1, stop.max_iters + 1):
        dppa_round(nodes, message_log=log, round_index=k)
        trace[k] = multi_objective(gather(), data)
        rounds = k
        if stop.rel_tol is not None and (
            trace[k - 1] - trace[k] <= stop.rel_tol * max(trace[k - 1], 1e-30)
        ):
            break
    return DppaResult(
        poses=gather(),
        rounds=rounds,
        objective=float(trace[rounds]),
        objective_trace=trace[: rounds + 1].copy(),
        message_log=tuple(log) if log is not None else (),
        unanchored_targets=unanchored,
    )
