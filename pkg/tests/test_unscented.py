"""Tests for sigma point sets, the unscented transform and joint sets over (x, p, X)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from src.errors import ConfigError, DepthDegenerate, NotPositiveDefinite, TransformUndefined
from src.geometry import Calibration, Pose, WorldMode, look_at_pose, project, project_batch
from src.unscented import (
    SigmaPointSet, SigmaScheme, joint_sigma_points, linear_gaussian_fit, sigma_points, unscented_transform,
)

SCHEMES = [SigmaScheme.SYMMETRIC, SigmaScheme.STANDARD]


class TestSigmaPoints:

    def test_symmetric_scalar_example(self):
        s = sigma_points([3.0], [[4.0]], SigmaScheme.SYMMETRIC)
        np.testing.assert_allclose(sorted(s.points[:, 0]), [1.0, 5.0])
        np.testing.assert_allclose(s.weights, [1.0, 1.0])
        assert s.mean()[0] == pytest.approx(3.0)
        assert s.covariance()[0, 0] == pytest.approx(4.0)

    def test_standard_scalar_example(self):
        s = sigma_points([0.0], [[1.0]], SigmaScheme.STANDARD, w0=0.5)
        np.testing.assert_allclose(s.points[:, 0], [0.0, np.sqrt(2), -np.sqrt(2)])
        np.testing.assert_allclose(s.weights, [0.5, 0.25, 0.25])
        assert s.covariance()[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_point_counts(self, d):
        assert len(sigma_points(np.zeros(d), np.eye(d), SigmaScheme.SYMMETRIC)) == 2 * d
        assert len(sigma_points(np.zeros(d), np.eye(d), SigmaScheme.STANDARD)) == 2 * d + 1

    def test_standard_weights_sum_to_one(self):
        s = sigma_points(np.zeros(4), np.eye(4), SigmaScheme.STANDARD, w0=0.2)
        assert s.weights[0] + np.sum(s.weights[1:]) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(s.weights[1:], 0.8 / 8)

    def test_symmetric_set_is_centred(self):
        s = sigma_points(np.zeros(5), np.eye(5), SigmaScheme.SYMMETRIC)
        np.testing.assert_allclose(s.points.sum(axis=0), 0.0, atol=1e-12)

    @pytest.mark.parametrize("w0", [0.0, 1.0, -0.1])
    def test_invalid_centre_weight(self, w0):
        with pytest.raises(ConfigError):
            sigma_points([0.0], [[1.0]], SigmaScheme.STANDARD, w0=w0)

    @settings(deadline=None, max_examples=60)
    @given(d=st.integers(min_value=1, max_value=9), seed=st.integers(min_value=0, max_value=10_000),
           scheme=st.sampled_from(SCHEMES), w0=st.floats(min_value=0.05, max_value=0.95))
    def test_moments_reproduced(self, d, seed, scheme, w0):
        rng = np.random.default_rng(seed)
        mean = rng.normal(size=d)
        cov = random_spd(rng, d)
        s = sigma_points(mean, cov, scheme, w0)
        np.testing.assert_allclose(s.mean(), mean, atol=1e-10 * max(1.0, np.max(np.abs(cov))))
        np.testing.assert_allclose(s.covariance(), cov, rtol=1e-8, atol=1e-8 * np.max(np.abs(cov)))


class TestUnscentedTransform:

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_identity_map(self, scheme, rng):
        mean, cov = rng.normal(size=3), random_spd(rng, 3)
        mu, sigma = unscented_transform(sigma_points(mean, cov, scheme), lambda x: x)
        np.testing.assert_allclose(mu, mean, atol=1e-10)
        np.testing.assert_allclose(sigma, cov, atol=1e-10)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_linear_map_is_exact(self, scheme, rng):
        A, b = rng.normal(size=(2, 4)), rng.normal(size=2)
        mean, cov = rng.normal(size=4), random_spd(rng, 4)
        mu, sigma = unscented_transform(sigma_points(mean, cov, scheme), lambda x: A @ x + b)
        np.testing.assert_allclose(mu, A @ mean + b, atol=1e-9)
        np.testing.assert_allclose(sigma, A @ cov @ A.T, atol=1e-9)

    def test_batched_matches_pointwise(self, rng):
        s = sigma_points(rng.normal(size=3), random_spd(rng, 3))
        mu_a, cov_a = unscented_transform(s, lambda x: np.sin(x))
        mu_b, cov_b = unscented_transform(s, np.sin, batched=True)
        np.testing.assert_allclose(mu_a, mu_b)
        np.testing.assert_allclose(cov_a, cov_b)

    def test_projection_matches_monte_carlo(self, rng):
        mode = WorldMode.THREE_D
        pose, calib = Pose.identity(mode), Calibration.identity(mode)
        mean, cov = np.array([0.0, 0.0, 5.0]), 0.01 * np.eye(3)
        s = sigma_points(mean, cov, SigmaScheme.STANDARD)
        mu, sigma = unscented_transform(s, lambda X: project(pose, calib, X, mode))

        samples = rng.multivariate_normal(mean, cov, size=1_000_000)
        pushed = samples[:, :2] / samples[:, 2:3]
        stderr = pushed.std(axis=0) / np.sqrt(len(pushed))
        assert np.all(np.abs(pushed.mean(axis=0) - mu) < 4 * stderr)
        np.testing.assert_allclose(sigma, np.cov(pushed.T), rtol=0.02, atol=3e-6)

    def test_undefined_map_is_reported(self):
        mode = WorldMode.THREE_D
        pose, calib = Pose.identity(mode), Calibration.identity(mode)
        s = sigma_points([0.0, 0.0, 0.0], np.eye(3))
        with pytest.raises(TransformUndefined):
            unscented_transform(s, lambda X: project(pose, calib, X, mode))

    def test_non_finite_output_is_reported(self):
        s = sigma_points([0.0], [[1.0]])
        with pytest.raises(TransformUndefined):
            unscented_transform(s, lambda x: np.array([np.inf]))

    def test_indefinite_covariance_raises(self):
        s = SigmaPointSet(np.array([[0.0], [1.0], [-1.0]]), np.array([2.0, -0.5, -0.5]), SigmaScheme.STANDARD)
        with pytest.raises(NotPositiveDefinite):
            unscented_transform(s, lambda x: x)

    @pytest.mark.parametrize("scheme", SCHEMES)
    @pytest.mark.parametrize("mu, var", [(0.0, 1.0), (2.0, 0.5), (-1.5, 3.0)])
    def test_cubic_mean_is_exact(self, scheme, mu, var):
        s = sigma_points([mu], [[var]], scheme)
        mean, _ = unscented_transform(s, lambda x: x ** 3)
        assert mean[0] == pytest.approx(mu ** 3 + 3 * mu * var, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_correlated_cubic_mean_is_exact(self, scheme, rng):
        m, S = rng.normal(size=3), random_spd(rng, 3, scale=0.3)

        def cubic(x):
            return np.array([x[0] * x[1] * x[2] + x[0] ** 3])

        mean, _ = unscented_transform(sigma_points(m, S, scheme), cubic)
        expected = (m[0] * m[1] * m[2] + m[0] * S[1, 2] + m[1] * S[0, 2] + m[2] * S[0, 1]
                    + m[0] ** 3 + 3 * m[0] * S[0, 0])
        assert mean[0] == pytest.approx(expected, rel=1e-10, abs=1e-10)


class TestJointSets:

    def _sets(self, rng, d_X=3, d_p=2):
        set_X = sigma_points(rng.normal(size=d_X), random_spd(rng, d_X))
        set_p = sigma_points(rng.normal(size=d_p), random_spd(rng, d_p))
        return set_X, set_p

    def test_layout_and_weights(self, rng):
        set_X, set_p = self._sets(rng)
        joint = joint_sigma_points(set_X, set_p, lambda p, X: X[:2] + p)
        assert len(joint) == len(set_X) * len(set_p)
        assert joint.dim == 2 + 2 + 3
        assert np.sum(joint.normalized_weights) == pytest.approx(1.0)
        np.testing.assert_allclose(joint.columns(2, 4).mean(), set_p.mean(), atol=1e-10)
        np.testing.assert_allclose(joint.columns(4, 7).mean(), set_X.mean(), atol=1e-10)

    def test_constant_map(self, rng):
        set_X, set_p = self._sets(rng)
        joint = joint_sigma_points(set_X, set_p, lambda p, X: np.array([1.5, -2.0]))
        cov = joint.covariance()
        np.testing.assert_allclose(joint.mean()[:2], [1.5, -2.0])
        np.testing.assert_allclose(cov[:2, :], 0.0, atol=1e-12)

    def test_identity_coupling(self, rng):
        set_X, set_p = self._sets(rng)
        joint = joint_sigma_points(set_X, set_p, lambda p, X: X)
        cov = joint.covariance()
        np.testing.assert_allclose(cov[:3, 5:], set_X.covariance(), atol=1e-10)
        np.testing.assert_allclose(cov[:3, 3:5], 0.0, atol=1e-10)

    def test_linear_fit_recovers_linear_map(self, rng):
        set_X, set_p = self._sets(rng)
        A_p, A_X = rng.normal(size=(2, 2)), rng.normal(size=(2, 3))
        joint = joint_sigma_points(set_X, set_p, lambda p, X: A_p @ p + A_X @ X)
        fit = linear_gaussian_fit(joint, 2)
        np.testing.assert_allclose(fit.gain, np.hstack([A_p, A_X]), atol=1e-8)
        np.testing.assert_allclose(fit.residual_cov, 0.0, atol=1e-10)

    def test_batched_projection_joint(self, rng):
        mode = WorldMode.THREE_D
        calib = Calibration.identity(mode)
        set_X = sigma_points([0.1, 0.2, 6.0], 0.01 * np.eye(3))
        set_p = sigma_points(np.zeros(6), 1e-4 * np.eye(6))
        looped = joint_sigma_points(set_X, set_p, lambda p, X: project(Pose.from_vector(p, mode), calib, X, mode))
        batched = joint_sigma_points(set_X, set_p, lambda p, X: project_batch(p, X, calib, mode), batched=True)
        np.testing.assert_allclose(looped.points, batched.points, atol=1e-12)

    def test_depth_failure_names_transform(self, rng):
        set_X, set_p = self._sets(rng)

        def f(p, X):
            raise DepthDegenerate(0.0)

        with pytest.raises(TransformUndefined):
            joint_sigma_points(set_X, set_p, f)


@pytest.mark.slow
class TestMonteCarloAgreement:
    """Projected sigma-point moments against a million antithetic samples, for random pose/feature priors."""

    N_PAIRS = 500_000

    @pytest.mark.parametrize("seed", range(20))
    def test_random_pose_and_feature_prior(self, seed):
        mode = WorldMode.THREE_D
        rng = np.random.default_rng(1000 + seed)
        calib = Calibration(np.array([[1.2, 0.0, 0.1], [0.0, 1.1, -0.05], [0.0, 0.0, 1.0]]))
        direction = rng.normal(size=3)
        center = 8.0 * direction / np.linalg.norm(direction)
        pose = look_at_pose(center, rng.uniform(-0.5, 0.5, size=3), mode)
        mean = np.concatenate([pose.vector, rng.uniform(-1.0, 1.0, size=3)])
        stds = np.concatenate([
            rng.uniform(0.01, 0.05, size=3), rng.uniform(0.002, 0.01, size=3), rng.uniform(0.02, 0.1, size=3),
        ])
        cov = np.diag(stds ** 2)

        def f(v):
            return project_batch(v[:, :6], v[:, 6:], calib, mode)

        mu, sigma = unscented_transform(sigma_points(mean, cov, SigmaScheme.STANDARD), f, batched=True)

        z = rng.normal(size=(self.N_PAIRS, 9)) * stds
        pushed = f(np.vstack([mean + z, mean - z]))
        stderr = pushed.std(axis=0) / np.sqrt(len(pushed))
        assert np.all(np.abs(pushed.mean(axis=0) - mu) < 3 * stderr)
        np.testing.assert_allclose(sigma, np.cov(pushed.T), rtol=0.05, atol=1e-2 * np.max(np.diag(sigma)))
