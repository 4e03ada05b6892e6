"""Rigid-pose primitives and the two non-convex projections the solvers rely on.

Points are plain float64 arrays of length ``d`` with ``d`` in {2, 3}; the same
formulas apply in both dimensions.  A pose ``(R, T)`` maps a point expressed in
a node's private local frame into the shared global frame via ``R @ p + T``.

Conventions pinned here (and mirrored by the compiled kernel):

* projecting a sphere's own center onto it returns ``center + radius * e1``
  (first canonical axis) -- the projection is otherwise undefined there;
* projecting onto a zero-radius sphere returns the center;
* the nearest-rotation projection applies the determinant sign fix to the
  last singular direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Tolerance used to accept a matrix as a rotation (R @ R.T = I, det = +1).
ROTATION_TOL = 1e-9

SUPPORTED_DIMS = (2, 3)


def as_vector(p, dim: int | None = None) -> np.ndarray:
    """Coerce ``p`` to a finite 1-D float64 array, optionally of length ``dim``."""
    v = np.asarray(p, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def rotation_2d(angle: float) -> np.ndarray:
    """Counter-clockwise planar rotation by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def is_rotation(matrix: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True if ``matrix`` is square, orthogonal and oriented within ``tol``."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    d = m.shape[0]
    if not np.all(np.isfinite(m)):
        return False
    if np.linalg.norm(m @ m.T - np.eye(d)) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly from SO(dim).

    2-D: a uniform angle.  3-D: QR-orthonormalized Gaussian matrix with the
    sign of the diagonal fixed, then the determinant flipped to +1 if needed.
    """
    if dim == 2:
        return rotation_2d(rng.uniform(0.0, 2.0 * np.pi))
    if dim == 3:
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, -1] = -q[:, -1]
        return q
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class Pose:
    """Rigid transform of one node's local frame relative to the global frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        translation = as_vector(self.translation)
        d = translation.shape[0]
        if d not in SUPPORTED_DIMS:
            raise ValueError(f"unsupported dimension {d}")
        if rotation.shape != (d, d):
            raise ValueError(
                f"rotation shape {rotation.shape} does not match translation length {d}"
            )
        if not is_rotation(rotation):
            raise ValueError("rotation must satisfy R @ R.T = I and det(R) = 1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Pose":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def random(
        cls,
        dim: int,
        rng: np.random.Generator,
        translation_scale: float = 1.0,
    ) -> "Pose":
        """Random pose: uniform rotation, translation ~ U(-scale, scale)^d."""
        return cls(
            random_rotation(dim, rng),
            rng.uniform(-translation_scale, translation_scale, size=dim),
        )

    def apply(self, p) -> np.ndarray:
        """Map a local point into the global frame: ``R @ p + T``."""
        return self.rotation @ as_vector(p, self.dim) + self.translation

    def inverse(self) -> "Pose":
        """Pose mapping global points back into the local frame."""
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)


def apply_pose(pose: Pose, p) -> np.ndarray:
    """Functional form of :meth:`Pose.apply`."""
    return pose.apply(p)


@dataclass(frozen=True)
class SphereSurface:
    """Set of points at a fixed range from a known center.

    This is the constraint a single range measurement induces: the unknown
    global position must lie on the surface, not inside the ball.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = as_vector(self.center)
        radius = float(self.radius)
        if not np.isfinite(radius) or radius < 0.0:
            raise ValueError(f"radius must be finite and >= 0, got {radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, y, rtol: float = 1e-12) -> bool:
        """True if ``y`` lies on the surface to relative tolerance ``rtol``."""
        dist = float(np.linalg.norm(as_vector(y, self.dim) - self.center))
        return abs(dist - self.radius) <= rtol * max(1.0, self.radius)


def project_onto_sphere(surface: SphereSurface, y) -> np.ndarray:
    """Euclidean projection of ``y`` onto a spherical surface.

    Scales the ray from the center through ``y`` to length ``radius``.  The
    center itself has no unique projection; the fixed ``center + radius*e1``
    convention keeps runs reproducible under a seed.
    """
    y = as_vector(y, surface.dim)
    if surface.radius == 0.0:
        return surface.center.copy()
    diff = y - surface.center
    # sqrt-of-squares keeps the scalar and batch paths bit-identical
    dist = float(np.sqrt(np.sum(diff * diff)))
    if dist == 0.0:
        out = surface.center.copy()
        out[0] += surface.radius
        return out
    return surface.center + (surface.radius / dist) * diff


def project_onto_spheres(
    centers: np.ndarray, radii: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Row-wise :func:`project_onto_sphere` for stacked surfaces and points."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    points = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    diff = points - centers
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    out = centers.copy()
    on_ray = (radii > 0.0) & (dist > 0.0)
    scale = np.zeros_like(dist)
    scale[on_ray] = radii[on_ray] / dist[on_ray]
    out[on_ray] += scale[on_ray, None] * diff[on_ray]
    at_center = (radii > 0.0) & (dist == 0.0)
    out[at_center, 0] += radii[at_center]
    return out


def project_onto_rotation_group(omega: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``omega`` in Frobenius norm.

    With ``omega = U S V^T``, returns ``U @ diag(1, ..., +-1) @ V^T`` where the
    last diagonal entry is -1 exactly when ``det(U V^T) = -1``.  Degenerate
    trailing singular values make the minimizer non-unique; the result is then
    whichever minimizer the SVD routine induces.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise ValueError("matrix entries must be finite")
    u, _, vt = np.linalg.svd(omega)
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
    return u @ vt
