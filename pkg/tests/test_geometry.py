import numpy as np
import pytest

from rangealign.geometry import (
    Pose,
    SphereSurface,
    apply_pose,
    is_rotation,
    project_onto_rotation_group,
    project_onto_sphere,
    project_onto_spheres,
    random_rotation,
    rotation_2d,
)


class TestApplyPose:
    def test_identity(self):
        pose = Pose.identity(2)
        assert np.allclose(apply_pose(pose, [3.0, 4.0]), [3.0, 4.0])

    def test_quarter_turn(self):
        pose = Pose(rotation_2d(np.pi / 2), np.zeros(2))
        assert np.allclose(apply_pose(pose, [1.0, 0.0]), [0.0, 1.0], atol=1e-15)

    def test_half_turn_with_translation(self):
        # hand oracle: R(pi) @ (1,0) = (-1,0); plus (1,1) gives (0,1)
        pose = Pose(rotation_2d(np.pi), np.array([1.0, 1.0]))
        assert np.allclose(apply_pose(pose, [1.0, 0.0]), [0.0, 1.0], atol=1e-15)

    def test_dimension_mismatch(self):
        pose = Pose.identity(2)
        with pytest.raises(ValueError):
            apply_pose(pose, [1.0, 2.0, 3.0])

    def test_inverse_round_trip(self, rng):
        for dim in (2, 3):
            pose = Pose.random(dim, rng)
            p = rng.uniform(-5, 5, size=dim)
            assert np.allclose(pose.inverse().apply(pose.apply(p)), p, atol=1e-12)


class TestPoseValidation:
    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.array([[1.0, 0.0], [0.0, -1.0]]), np.zeros(2))  # reflection

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3), np.zeros(2))


class TestSphereProjection:
    def test_scaling_along_ray(self):
        s = SphereSurface(np.zeros(3), 1.0)
        assert np.array_equal(project_onto_sphere(s, [2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_fixed_point_on_surface(self):
        s = SphereSurface(np.zeros(3), 1.0)
        y = np.array([1.0, 0.0, 0.0])
        assert np.array_equal(project_onto_sphere(s, y), y)

    def test_axis_aligned_offset(self):
        s = SphereSurface(np.array([1.0, 1.0, 1.0]), 2.0)
        assert np.allclose(project_onto_sphere(s, [1.0, 1.0, 4.0]), [1.0, 1.0, 3.0])

    def test_center_convention(self):
        s = SphereSurface(np.zeros(2), 1.0)
        assert np.array_equal(project_onto_sphere(s, [0.0, 0.0]), [1.0, 0.0])

    def test_zero_radius_returns_center(self):
        s = SphereSurface(np.array([2.0, 3.0]), 0.0)
        assert np.array_equal(project_onto_sphere(s, [5.0, 5.0]), [2.0, 3.0])

    def test_nan_rejected(self):
        s = SphereSurface(np.zeros(2), 1.0)
        with pytest.raises(ValueError):
            project_onto_sphere(s, [np.nan, 0.0])

    def test_membership_and_idempotence(self, rng):
        for _ in range(200):
            dim = int(rng.integers(2, 4))
            s = SphereSurface(rng.normal(size=dim), float(rng.uniform(0.1, 5.0)))
            y = rng.normal(scale=4.0, size=dim)
            p = project_onto_sphere(s, y)
            assert abs(np.linalg.norm(p - s.center) - s.radius) <= 1e-12 * max(1.0, s.radius)
            p2 = project_onto_sphere(s, p)
            assert np.allclose(p2, p, rtol=1e-12, atol=1e-12)

    def test_minimality_against_sampled_surface_points(self, rng):
        # the projection is at least as close as any other surface point
        for _ in range(1000):
            dim = int(rng.integers(2, 4))
            s = SphereSurface(rng.normal(size=dim), float(rng.uniform(0.1, 5.0)))
            y = rng.normal(scale=4.0, size=dim)
            p = project_onto_sphere(s, y)
            z = rng.normal(size=dim)
            z = s.center + s.radius * z / np.linalg.norm(z)
            assert np.linalg.norm(p - y) <= np.linalg.norm(z - y) + 1e-12

    def test_batch_matches_scalar(self, rng):
        centers = rng.normal(size=(50, 3))
        radii = rng.uniform(0.0, 3.0, size=50)
        radii[0] = 0.0
        points = rng.normal(scale=3.0, size=(50, 3))
        points[1] = centers[1]  # exercise the center convention row-wise
        batch = project_onto_spheres(centers, radii, points)
        for i in range(50):
            one = project_onto_sphere(SphereSurface(centers[i], radii[i]), points[i])
            assert np.array_equal(batch[i], one)


def _rotation_grid_3d(angle_step_deg=1.0, axes=1500):
    """SO(3) cover: Fibonacci-sphere axes x 1-degree angle sweep (Rodrigues)."""
    k = np.arange(axes)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    z = 1.0 - 2.0 * (k + 0.5) / axes
    r = np.sqrt(1.0 - z * z)
    ax = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)  # (A, 3)
    zeros = np.zeros(axes)
    hat = np.stack([
        np.stack([zeros, -ax[:, 2], ax[:, 1]], axis=1),
        np.stack([ax[:, 2], zeros, -ax[:, 0]], axis=1),
        np.stack([-ax[:, 1], ax[:, 0], zeros], axis=1),
    ], axis=1)                                                    # (A, 3, 3)
    hat2 = hat @ hat
    angles = np.deg2rad(np.arange(0.0, 180.0 + angle_step_deg, angle_step_deg))
    sin = np.sin(angles)[:, None, None, None]
    cos1 = (1.0 - np.cos(angles))[:, None, None, None]
    mats = np.eye(3) + sin * hat[None] + cos1 * hat2[None]        # (T, A, 3, 3)
    return mats.reshape(-1, 3, 3)


class TestRotationProjection:
    def test_identity_fixed(self):
        assert np.allclose(project_onto_rotation_group(np.eye(3)), np.eye(3))

    def test_positive_scaling_preserved(self, rng):
        for dim in (2, 3):
            r = random_rotation(dim, rng)
            assert np.allclose(project_onto_rotation_group(2.0 * r), r, atol=1e-12)

    def test_reflection_projects_to_identity(self):
        # brute-force oracle agrees: no gridded rotation is closer to
        # diag(1,1,-1) than the identity
        omega = np.diag([1.0, 1.0, -1.0])
        result = project_onto_rotation_group(omega)
        assert np.allclose(result, np.eye(3), atol=1e-12)
        grid = _rotation_grid_3d()
        dists = np.linalg.norm(grid - omega, axis=(1, 2))
        assert dists.min() >= np.linalg.norm(result - omega) - 1e-9

    def test_output_always_valid(self, rng):
        for _ in range(300):
            dim = int(rng.integers(2, 4))
            omega = rng.normal(size=(dim, dim))
            r = project_onto_rotation_group(omega)
            assert is_rotation(r, tol=1e-9)

    def test_optimality_on_grid_2d(self, rng):
        angles = np.deg2rad(np.arange(0.0, 360.0, 0.25))
        grid = np.array([rotation_2d(a) for a in angles])
        for _ in range(50):
            omega = rng.normal(size=(2, 2))
            r = project_onto_rotation_group(omega)
            best = np.linalg.norm(grid - omega, axis=(1, 2)).min()
            assert best >= np.linalg.norm(r - omega) - 1e-9

    def test_optimality_on_grid_3d(self, rng):
        grid = _rotation_grid_3d()
        for _ in range(20):
            omega = rng.normal(size=(3, 3))
            r = project_onto_rotation_group(omega)
            best = np.linalg.norm(grid - omega, axis=(1, 2)).min()
            assert best >= np.linalg.norm(r - omega) - 1e-9

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(ValueError):
            project_onto_rotation_group(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            project_onto_rotation_group(np.array([[np.inf, 0.0], [0.0, 1.0]]))


class TestRandomRotation:
    def test_uniform_2d_is_rotation(self, rng):
        for _ in range(20):
            assert is_rotation(random_rotation(2, rng))

    def test_qr_3d_is_rotation(self, rng):
        for _ in range(20):
            assert is_rotation(random_rotation(3, rng))

    def test_unsupported_dimension(self, rng):
        with pytest.raises(ValueError):
            random_rotation(4, rng)
