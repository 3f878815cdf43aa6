"""
Sigma Points & the Unscented Transform
Weighted point sets that reproduce a Gaussian's mean and covariance, pushed
through nonlinear maps; product sets over (x, p, X) for cluster joints.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve

from src.errors import ConfigError, TransformUndefined
from src.gaussian import cholesky_jittered, regularize_covariance


class SigmaScheme(Enum):
    SYMMETRIC = "symmetric"   # 2d equally weighted points, spread k = √d
    STANDARD = "standard"     # 2d+1 points with a centre weight w0
    PRODUCT = "product"       # concatenated combinations of two sets

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ConfigError(f"unknown sigma point scheme {name!r}") from None


DEFAULT_SCHEME = SigmaScheme.STANDARD
DEFAULT_W0 = 1.0 / 3.0


@dataclass(frozen=True)
class SigmaPointSet:
    """Rows of `points` are sigma points; `weights` need not sum to one."""

    points: np.ndarray
    weights: np.ndarray
    scheme: SigmaScheme

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    @property
    def normalized_weights(self):
        return self.weights / np.sum(self.weights)

    def mean(self):
        return self.normalized_weights @ self.points

    def covariance(self):
        centred = self.points - self.mean()
        cov = (centred.T * self.normalized_weights) @ centred
        return 0.5 * (cov + cov.T)

    def columns(self, start, stop):
        """The same weighted set restricted to a block of coordinates."""
        return SigmaPointSet(self.points[:, start:stop], self.weights, self.scheme)


@dataclass(frozen=True)
class LinearGaussianFit:
    """x ≈ response_mean + gain·(z − conditioning_mean) + N(0, residual_cov)."""

    response_mean: np.ndarray
    conditioning_mean: np.ndarray
    gain: np.ndarray
    residual_cov: np.ndarray
    response_cov: np.ndarray
    conditioning_cov: np.ndarray


def sigma_points(mean, cov, scheme=DEFAULT_SCHEME, w0=DEFAULT_W0):
    """Sigma points of N(mean, cov) from the lower Cholesky factor of cov."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    d = mean.size
    L = cholesky_jittered(np.reshape(cov, (d, d)), "sigma point covariance")
    columns = L.T  # row i is ℓ_i

    if scheme is SigmaScheme.SYMMETRIC:
        spread = np.sqrt(d) * columns
        points = np.vstack([mean + spread, mean - spread])
        weights = np.ones(2 * d)
    elif scheme is SigmaScheme.STANDARD:
        if not 0.0 < w0 < 1.0:
            raise ConfigError(f"centre weight w0 must lie in (0, 1), got {w0}")
        spread = np.sqrt(d / (1.0 - w0)) * columns
        points = np.vstack([mean, mean + spread, mean - spread])
        weights = np.concatenate([[w0], np.full(2 * d, (1.0 - w0) / (2 * d))])
    else:
        raise ConfigError(f"{scheme.value} sets are built by joint_sigma_points, not from moments")
    return SigmaPointSet(points, weights, scheme)


def _evaluate(f, points, batched, *extra):
    try:
        if batched:
            out = np.asarray(f(points, *extra), dtype=float)
        else:
            rows = zip(points, *extra)
            out = np.array([np.atleast_1d(np.asarray(f(*row), dtype=float)) for row in rows])
    except (ArithmeticError, ValueError) as err:
        raise TransformUndefined(f"map undefined at a sigma point ({err})") from err
    out = out.reshape(points.shape[0], -1)
    if not np.all(np.isfinite(out)):
        raise TransformUndefined("map produced non-finite values at a sigma point")
    return out


def unscented_transform(sigma_set, f, batched=False):
    """Gaussian approximation (μ_y, Σ_y) of f(x) from the transformed sigma points.

    With batched=True, f receives the whole (N, d) array at once. Raises
    NotPositiveDefinite when the covariance stays indefinite after jitter.
    """
    transformed = SigmaPointSet(_evaluate(f, sigma_set.points, batched), sigma_set.weights, sigma_set.scheme)
    return transformed.mean(), regularize_covariance(transformed.covariance(), "transformed covariance")


def joint_sigma_points(set_X, set_p, f, batched=False):
    """Product set over (x, p, X): one point [f(s_p, s_X), s_p, s_X] per pair.

    f is called as f(p, X); with batched=True it receives (N, dim) arrays.
    The pair weight is the product of the two source weights.
    """
    n_X, n_p = len(set_X), len(set_p)
    X_rows = np.repeat(set_X.points, n_p, axis=0)
    p_rows = np.tile(set_p.points, (n_X, 1))
    x_rows = _evaluate(f, p_rows, batched, X_rows)
    weights = np.repeat(set_X.weights, n_p) * np.tile(set_p.weights, n_X)
    return SigmaPointSet(np.hstack([x_rows, p_rows, X_rows]), weights, SigmaScheme.PRODUCT)


def linear_gaussian_fit(joint, response_dim):
    """Weighted least-squares fit of the first `response_dim` coordinates on the rest.

    The residual covariance is accumulated from the regression residuals
    directly rather than as Σ_xx − AΣ_zzAᵀ.
    """
    w = joint.normalized_weights
    mu = w @ joint.points
    centred = joint.points - mu
    dx, dz = centred[:, :response_dim], centred[:, response_dim:]
    S_xx = (dx.T * w) @ dx
    S_zz = (dz.T * w) @ dz
    S_xz = (dx.T * w) @ dz
    L = cholesky_jittered(S_zz, "conditioning covariance")
    gain = cho_solve((L, True), S_xz.T).T
    resid = dx - dz @ gain.T
    Q = (resid.T * w) @ resid
    return LinearGaussianFit(
        response_mean=mu[:response_dim],
        conditioning_mean=mu[response_dim:],
        gain=gain,
        residual_cov=0.5 * (Q + Q.T),
        response_cov=0.5 * (S_xx + S_xx.T),
        conditioning_cov=0.5 * (S_zz + S_zz.T),
    )
