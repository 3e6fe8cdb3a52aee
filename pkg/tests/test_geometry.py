"""Geometry tests: rotations, transforms, projection, covariance propagation.

Expected values are either hand-computed (and shown inline) or checked
against independent numerical oracles (finite differences, round trips).
"""

import numpy as np
import pytest

from proba.errors import NonPositiveDepth, NonPositiveRadius
from proba.geometry import (DEPTH_FLOOR, Intrinsics, Pose, apply, backproject,
                            compose, inverse, project, projected_covariance,
                            propagation_matrix_A, rotation_matrix,
                            rotation_vector)


def random_pose(rng) -> Pose:
    return Pose(rng.normal(0, 0.8, 3), rng.normal(0, 1.0, 3))


K100 = Intrinsics(fov=90.0, width=200, height=200)  # focal = 100 px


class TestRotationMatrix:
    def test_zero_rotation_is_identity(self):
        np.testing.assert_array_equal(rotation_matrix(np.zeros(3)), np.eye(3))

    def test_quarter_turn_about_z(self):
        R = rotation_matrix(np.array([0.0, 0.0, np.pi / 2]))
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(R, expected, atol=1e-15)

    def test_inverse_rotation_is_transpose(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            r = rng.normal(0, 1.0, 3)
            R = rotation_matrix(r)
            np.testing.assert_allclose(R @ rotation_matrix(-r), np.eye(3), atol=1e-12)

    def test_orthonormal_right_handed(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            R = rotation_matrix(rng.normal(0, 1.2, 3))
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_round_trip_with_rotation_vector(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            r = rng.normal(0, 0.9, 3)
            R = rotation_matrix(r)
            # the log map returns the representative with angle <= pi, so
            # compare realized rotations, plus the vector itself inside the
            # principal ball
            np.testing.assert_allclose(rotation_matrix(rotation_vector(R)), R,
                                       atol=1e-9)
            if np.linalg.norm(r) < np.pi - 1e-3:
                np.testing.assert_allclose(rotation_vector(R), r, atol=1e-9)

    def test_small_angle_round_trip(self):
        r = np.array([1e-9, -2e-9, 5e-10])
        np.testing.assert_allclose(rotation_vector(rotation_matrix(r)), r,
                                   atol=1e-15)

    def test_near_pi_round_trip(self):
        rng = np.random.default_rng(10)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        r = (np.pi - 1e-7) * axis
        R2 = rotation_matrix(rotation_vector(rotation_matrix(r)))
        np.testing.assert_allclose(R2, rotation_matrix(r), atol=1e-6)


class TestPoseGroup:
    def test_apply_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(apply(Pose.identity(), x), x)

    def test_compose_matches_sequential_apply(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b = random_pose(rng), random_pose(rng)
            x = rng.normal(0, 2.0, 3)
            np.testing.assert_allclose(apply(compose(a, b), x),
                                       apply(a, apply(b, x)), atol=1e-12)

    def test_inverse_is_involution(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            a = random_pose(rng)
            aa = inverse(inverse(a))
            np.testing.assert_allclose(aa.rotation, a.rotation, atol=1e-12)
            np.testing.assert_allclose(aa.translation, a.translation, atol=1e-12)

    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            a = random_pose(rng)
            e = compose(inverse(a), a)
            assert np.linalg.norm(e.rotation) < 1e-12
            assert np.linalg.norm(e.translation) < 1e-12

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            a = random_pose(rng)
            b = Pose.from_matrix(a.matrix())
            np.testing.assert_allclose(b.rotation, a.rotation, atol=1e-9)
            np.testing.assert_allclose(b.translation, a.translation, atol=1e-12)


class TestIntrinsics:
    def test_focal_from_fov(self):
        # fov 90 deg: f = (200/2) / tan(45 deg) = 100
        assert K100.focal == pytest.approx(100.0, abs=1e-12)

    def test_matrix_layout(self):
        K = K100.matrix()
        np.testing.assert_allclose(
            K, [[100.0, 0.0, 100.0], [0.0, 100.0, 100.0], [0.0, 0.0, 1.0]])

    @pytest.mark.parametrize("fov", [0.5, 179.5, -10.0])
    def test_fov_range_enforced(self, fov):
        with pytest.raises(ValueError):
            Intrinsics(fov=fov, width=100, height=100)


class TestProjection:
    def test_optical_axis_hits_principal_point(self):
        np.testing.assert_allclose(project(K100, np.array([0.0, 0.0, 2.0])),
                                   [100.0, 100.0])

    def test_offset_point(self):
        # f*X/Z = 100*1/2 = 50 right of center
        np.testing.assert_allclose(project(K100, np.array([1.0, 0.0, 2.0])),
                                   [150.0, 100.0])

    def test_behind_camera_raises(self):
        with pytest.raises(NonPositiveDepth):
            project(K100, np.array([0.0, 0.0, -1.0]))

    def test_backproject_principal_ray(self):
        np.testing.assert_allclose(backproject(K100, np.array([100.0, 100.0]), 3.0),
                                   [0.0, 0.0, 3.0])

    def test_backproject_inverts_projection_example(self):
        np.testing.assert_allclose(backproject(K100, np.array([150.0, 100.0]), 2.0),
                                   [1.0, 0.0, 2.0])

    def test_backproject_rejects_tiny_depth(self):
        with pytest.raises(NonPositiveDepth):
            backproject(K100, np.array([10.0, 10.0]), DEPTH_FLOOR / 2)

    def test_project_backproject_round_trip(self):
        rng = np.random.default_rng(21)
        K = Intrinsics(fov=72.0, width=640, height=480)
        for _ in range(1000):
            p = rng.uniform([0, 0], [640, 480])
            d = rng.uniform(0.05, 50.0)
            np.testing.assert_allclose(project(K, backproject(K, p, d)), p,
                                       atol=1e-12)


class TestPropagation:
    def test_on_axis_point_gives_identity(self):
        np.testing.assert_allclose(propagation_matrix_A(np.array([0.0, 0.0, 2.0])),
                                   np.eye(2))

    def test_unit_ratio_point(self):
        # X/Z = 1: [[1+1, 0], [0, 1]]
        np.testing.assert_allclose(propagation_matrix_A(np.array([2.0, 0.0, 2.0])),
                                   [[2.0, 0.0], [0.0, 1.0]])

    def test_determinant_identity(self):
        rng = np.random.default_rng(22)
        for _ in range(1000):
            x = np.array([rng.normal(0, 2), rng.normal(0, 2), rng.uniform(0.1, 5)])
            A = propagation_matrix_A(x)
            expected = 1.0 + (x[0] ** 2 + x[1] ** 2) / x[2] ** 2
            assert np.linalg.det(A) == pytest.approx(expected, abs=1e-12 * expected)

    def test_projected_covariance_on_axis(self):
        # f^2 sigma^2 / Z^2 = 1e4 * 0.01 / 4 = 25
        cov = projected_covariance(K100, np.array([0.0, 0.0, 2.0]), 0.1)
        np.testing.assert_allclose(cov, 25.0 * np.eye(2))

    def test_depth_scaling(self):
        c1 = projected_covariance(K100, np.array([0.0, 0.0, 2.0]), 0.1)
        c2 = projected_covariance(K100, np.array([0.0, 0.0, 4.0]), 0.1)
        np.testing.assert_allclose(c2, c1 / 4.0)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(NonPositiveRadius):
            projected_covariance(K100, np.array([0.0, 0.0, 2.0]), 0.0)

    def test_matches_finite_difference_jacobian(self):
        """sigma^2 J J^T with J from central differences of the full pixel map."""
        rng = np.random.default_rng(23)
        K = Intrinsics(fov=65.0, width=800, height=600)
        for _ in range(1000):
            x = np.array([rng.normal(0, 1.0), rng.normal(0, 1.0),
                          rng.uniform(0.3, 6.0)])
            sigma = rng.uniform(0.01, 1.0)
            h = 1e-5 * max(1.0, np.linalg.norm(x))
            J = np.empty((2, 3))
            for k in range(3):
                dx = np.zeros(3)
                dx[k] = h
                J[:, k] = (project(K, x + dx) - project(K, x - dx)) / (2 * h)
            expected = sigma**2 * J @ J.T
            got = projected_covariance(K, x, sigma)
            err = np.linalg.norm(got - expected) / np.linalg.norm(expected)
            assert err < 1e-6
