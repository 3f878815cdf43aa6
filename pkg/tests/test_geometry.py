"""Tests for rotations, the camera model, look-at poses and triangulation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import ConfigError, DegenerateGeometry, DepthDegenerate
from src.geometry import (
    Calibration, Pose, WorldMode, camera_matrix, degree_representable, degree_representable_variances,
    degree_variances, degrees_from_radians, euler_from_rotation, look_at_pose, project, project_batch,
    radian_variances, radians_from_degrees, reprojection_distances, rotation_from_euler, similarity_transform,
    triangulate_oracle,
)

_angle = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


class TestWorldMode:

    def test_dimensions(self):
        assert (WorldMode.TWO_D.world_dim, WorldMode.TWO_D.image_dim, WorldMode.TWO_D.pose_dim) == (2, 1, 3)
        assert (WorldMode.THREE_D.world_dim, WorldMode.THREE_D.image_dim, WorldMode.THREE_D.pose_dim) == (3, 2, 6)

    def test_parse(self):
        assert WorldMode.parse("3D") is WorldMode.THREE_D
        with pytest.raises(ConfigError):
            WorldMode.parse("4d")


class TestRotations:

    def test_zero_angles_give_identity(self, mode3, mode2):
        np.testing.assert_allclose(rotation_from_euler([0, 0, 0], mode3), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(rotation_from_euler([0], mode2), np.eye(2), atol=1e-15)

    def test_quarter_turn_2d(self, mode2):
        np.testing.assert_allclose(rotation_from_euler([np.pi / 2], mode2), [[0, -1], [1, 0]], atol=1e-15)

    def test_matches_explicit_axis_product(self, mode3):
        angles = (0.3, -0.2, 0.7)
        expected = _rz(angles[2]) @ _ry(angles[1]) @ _rx(angles[0])
        np.testing.assert_allclose(rotation_from_euler(angles, mode3), expected, atol=1e-12)

    @settings(deadline=None, max_examples=50)
    @given(st.tuples(_angle, _angle, _angle))
    def test_always_orthonormal(self, angles):
        R = rotation_from_euler(angles, WorldMode.THREE_D)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    @settings(deadline=None, max_examples=50)
    @given(st.tuples(_angle, st.floats(min_value=-1.4, max_value=1.4), _angle))
    def test_euler_round_trip_reproduces_rotation(self, angles):
        mode = WorldMode.THREE_D
        R = rotation_from_euler(angles, mode)
        np.testing.assert_allclose(rotation_from_euler(euler_from_rotation(R, mode), mode), R, atol=1e-9)


class TestCameraModel:

    def test_identity_pose_camera_matrix(self, mode3):
        P = camera_matrix(Pose.identity(mode3), Calibration.identity(mode3), mode3)
        np.testing.assert_allclose(P, np.hstack([np.eye(3), np.zeros((3, 1))]))

    def test_translated_camera_matrix(self, mode3):
        pose = Pose(center=[0, 0, -10], angles=[0, 0, 0])
        P = camera_matrix(pose, Calibration.identity(mode3), mode3)
        np.testing.assert_allclose(P[:, 3], [0, 0, 10])

    def test_camera_matrix_matches_direct_product(self, mode3, rng):
        pose = Pose(center=rng.normal(size=3), angles=rng.normal(size=3))
        K = np.array([[800.0, 0.5, 320.0], [0.0, 790.0, 240.0], [0.0, 0.0, 1.0]])
        R = _rz(pose.angles[2]) @ _ry(pose.angles[1]) @ _rx(pose.angles[0])
        expected = K @ R @ np.hstack([np.eye(3), -pose.center.reshape(3, 1)])
        np.testing.assert_allclose(camera_matrix(pose, Calibration(K), mode3), expected, atol=1e-9)

    def test_projection_examples(self, mode3, mode2):
        calib3, calib2 = Calibration.identity(mode3), Calibration.identity(mode2)
        np.testing.assert_allclose(project(Pose.identity(mode3), calib3, [0, 0, 5], mode3), [0, 0], atol=1e-15)
        np.testing.assert_allclose(project(Pose.identity(mode3), calib3, [1, 2, 5], mode3), [0.2, 0.4])
        np.testing.assert_allclose(project(Pose.identity(mode2), calib2, [1, 2], mode2), [0.5])

    def test_principal_plane_is_degenerate(self, mode3):
        with pytest.raises(DepthDegenerate):
            project(Pose.identity(mode3), Calibration.identity(mode3), [1, 1, 0], mode3)

    def test_batch_matches_single(self, mode3, rng):
        calib = Calibration.identity(mode3)
        poses = np.hstack([rng.normal(scale=0.1, size=(6, 3)), rng.normal(scale=0.1, size=(6, 3))])
        points = rng.normal(size=(6, 3)) + [0, 0, 8]
        batch = project_batch(poses, points, calib, mode3)
        for k in range(6):
            single = project(Pose.from_vector(poses[k], mode3), calib, points[k], mode3)
            np.testing.assert_allclose(batch[k], single, atol=1e-12)

    def test_calibration_validation(self):
        with pytest.raises(ConfigError):
            Calibration(np.array([[1.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(ConfigError):
            Calibration(np.diag([1.0, -1.0, 1.0]))


class TestLookAt:

    @pytest.mark.parametrize("center", [(10, 0, 0), (0, -10, 3), (0, 0, 10), (3, 4, -5)])
    def test_origin_projects_to_principal_point(self, mode3, center):
        pose = look_at_pose(center, np.zeros(3), mode3)
        np.testing.assert_allclose(project(pose, Calibration.identity(mode3), np.zeros(3), mode3),
                                   [0, 0], atol=1e-9)

    def test_2d_look_at(self, mode2):
        pose = look_at_pose([3.0, -7.0], [0.0, 0.0], mode2)
        np.testing.assert_allclose(project(pose, Calibration.identity(mode2), [0.0, 0.0], mode2), [0], atol=1e-12)


class TestSimilarityAndDistances:

    def test_similarity_transform_preserves_projection(self, mode3, rng):
        calib = Calibration.identity(mode3)
        pose = look_at_pose([8.0, 2.0, 1.0], np.zeros(3), mode3)
        X = rng.normal(size=(5, 3))
        Q = rotation_from_euler(rng.normal(size=3), mode3)
        new_pose, new_X = similarity_transform(pose, X, 2.5, Q, rng.normal(size=3), mode3)
        for a, b in zip(X, new_X):
            np.testing.assert_allclose(project(pose, calib, a, mode3), project(new_pose, calib, b, mode3), atol=1e-9)

    def test_degenerate_tracks_are_nan(self, mode3):
        calib = Calibration.identity(mode3)
        cameras = {0: (Pose.identity(mode3), calib)}
        features = {0: np.array([1.0, 2.0, 5.0]), 1: np.array([1.0, 1.0, 0.0])}
        d = reprojection_distances(cameras, features, [(0, 0, [0.2, 0.5]), (0, 1, [0, 0])], mode3)
        assert d[0] == pytest.approx(0.1)
        assert np.isnan(d[1])


class TestTriangulation:

    def test_stereo_pair_recovers_point(self, mode3):
        calib = Calibration.identity(mode3)
        X = np.array([0.0, 0.0, 5.0])
        views = []
        for cx in (-1.0, 1.0):
            pose = Pose(center=[cx, 0, 0], angles=[0, 0, 0])
            views.append((pose, calib, project(pose, calib, X, mode3)))
        np.testing.assert_allclose(triangulate_oracle(views, mode3), X, atol=1e-9)

    def test_2d_recovery(self, mode2):
        calib = Calibration.identity(mode2)
        X = np.array([0.4, -0.3])
        views = []
        for c in ([-5.0, -8.0], [6.0, -7.0]):
            pose = look_at_pose(c, [0.0, 0.0], mode2)
            views.append((pose, calib, project(pose, calib, X, mode2)))
        np.testing.assert_allclose(triangulate_oracle(views, mode2), X, atol=1e-9)

    def test_duplicate_cameras_are_degenerate(self, mode3):
        calib = Calibration.identity(mode3)
        pose = Pose(center=[0, 0, 0], angles=[0, 0, 0])
        x = project(pose, calib, [0.1, 0.2, 4.0], mode3)
        with pytest.raises(DegenerateGeometry):
            triangulate_oracle([(pose, calib, x), (pose, calib, x)], mode3)


class TestAngleUnits:

    @settings(max_examples=300)
    @given(_angle.filter(lambda a: a == 0.0 or abs(a) > 1e-300))
    def test_representable_angles_survive_degrees(self, angle):
        r = degree_representable(np.array([angle]))
        degrees = degrees_from_radians(r)
        assert radians_from_degrees(degrees)[0] == r[0]
        assert degrees_from_radians(radians_from_degrees(degrees))[0] == degrees[0]

    @settings(max_examples=300)
    @given(st.floats(min_value=1e-12, max_value=1e2, allow_nan=False, allow_infinity=False))
    def test_representable_variances_survive_degrees(self, variance):
        v = degree_representable_variances(np.array([variance]))
        assert radian_variances(degree_variances(v))[0] == v[0]

    def test_conversion_values(self):
        np.testing.assert_allclose(degrees_from_radians([np.pi, -np.pi / 2]), [180.0, -90.0])
        np.testing.assert_allclose(degree_variances([np.deg2rad(5.0) ** 2]), [25.0])
        assert degree_representable(np.zeros(3)).tolist() == [0.0, 0.0, 0.0]
