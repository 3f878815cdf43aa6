"""
Gaussian Factor Algebra
Canonical-form Gaussian factors over named variables: product, quotient,
marginalization, soft evidence and conversion to and from moment form.

A factor is exp(-½ xᵀKx + hᵀx + g) over the concatenation of its scope.
Scopes are kept sorted so that factors over the same variables always line
up block for block.
"""

from dataclasses import dataclass, field
from enum import IntEnum
import logging

import numpy as np
from scipy.linalg import cho_solve

from src.errors import ConfigError, NotPositiveDefinite, ScopeDimMismatch, SingularEliminationBlock

logger = logging.getLogger(__name__)

# --- Jitter ladder (multiples of the mean diagonal) ---
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
LOG_2PI = np.log(2.0 * np.pi)


class VarKind(IntEnum):
    FEATURE = 0
    POSE = 1
    PROJECTION = 2


_PREFIX = {VarKind.FEATURE: "X", VarKind.POSE: "p", VarKind.PROJECTION: "x"}


@dataclass(frozen=True, order=True)
class VariableId:
    """A named random variable. Identity is (kind, index); `dim` rides along."""

    kind: VarKind
    index: tuple
    dim: int = field(compare=False)

    def __str__(self):
        return _PREFIX[self.kind] + "_".join(str(i) for i in self.index)


def feature_var(i, mode):
    return VariableId(VarKind.FEATURE, (int(i),), mode.world_dim)


def pose_var(j, mode):
    return VariableId(VarKind.POSE, (int(j),), mode.pose_dim)


def projection_var(j, i, mode):
    return VariableId(VarKind.PROJECTION, (int(j), int(i)), mode.image_dim)


def _climb_jitter_ladder(M, what):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise NotPositiveDefinite(f"{what} contains non-finite entries")
    M = 0.5 * (M + M.T)
    n = M.shape[0]
    scale = float(np.mean(np.abs(np.diag(M)))) if n else 1.0
    if scale <= 0.0:
        scale = 1.0
    for eps in JITTER_LADDER:
        trial = M + eps * scale * np.eye(n) if eps else M
        try:
            L = np.linalg.cholesky(trial)
        except np.linalg.LinAlgError:
            continue
        if eps:
            logger.debug("Cholesky of %s needed jitter %.0e x mean diagonal", what, eps)
        return trial, L
    raise NotPositiveDefinite(f"{what} is not positive definite even after jitter {JITTER_LADDER[-1]:.0e}")


def cholesky_jittered(M, what="matrix"):
    """Lower Cholesky factor of a symmetric matrix, climbing the jitter ladder on failure."""
    return _climb_jitter_ladder(M, what)[1]


def regularize_covariance(M, what="covariance"):
    """Symmetrized M plus the smallest ladder jitter that makes it positive definite."""
    return _climb_jitter_ladder(M, what)[0]


def _inverse_from_cholesky(L):
    return cho_solve((L, True), np.eye(L.shape[0]))


class GaussianFactor:
    """Canonical-form Gaussian factor; may be improper (PSD or indefinite K) when used as a message."""

    __slots__ = ("scope", "K", "h", "g", "_slices")

    def __init__(self, scope, K, h, g=0.0):
        scope = tuple(scope)
        if len(set(scope)) != len(scope):
            raise ScopeDimMismatch(f"repeated variable in scope {[str(v) for v in scope]}")
        K = np.atleast_2d(np.asarray(K, dtype=float))
        h = np.asarray(h, dtype=float).reshape(-1)
        dims = [v.dim for v in scope]
        n = sum(dims)
        if K.shape != (n, n) or h.shape != (n,):
            raise ScopeDimMismatch(
                f"scope of dimension {n} does not match K {K.shape} / h {h.shape}"
            )

        order = sorted(range(len(scope)), key=scope.__getitem__)
        if order != list(range(len(scope))):
            starts = np.cumsum([0] + dims)
            perm = np.concatenate([np.arange(starts[k], starts[k + 1]) for k in order]).astype(int)
            K = K[np.ix_(perm, perm)]
            h = h[perm]
            scope = tuple(scope[k] for k in order)

        self.scope = scope
        self.K = 0.5 * (K + K.T)
        self.h = h
        self.g = float(g)
        self._slices = {}
        start = 0
        for v in scope:
            self._slices[v] = slice(start, start + v.dim)
            start += v.dim

    # ── Construction ──────────────────────────────────────────────

    @classmethod
    def unit(cls, scope):
        """The identity element: K = 0, h = 0, g = 0."""
        n = sum(v.dim for v in scope)
        return cls(scope, np.zeros((n, n)), np.zeros(n), 0.0)

    @classmethod
    def from_moments(cls, scope, mean, cov):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        L = cholesky_jittered(cov, "covariance")
        K = _inverse_from_cholesky(L)
        h = K @ mean
        g = -0.5 * mean @ h - 0.5 * mean.size * LOG_2PI - np.sum(np.log(np.diag(L)))
        return cls(scope, K, h, g)

    @classmethod
    def from_linear_gaussian(cls, response, conditioning, gain, response_mean,
                             conditioning_mean, residual_cov, conditioning_precision=None):
        """Joint factor of x = μ_x + A(z − μ_z) + ε, ε ~ N(0, Q), times an optional prior on z.

        `conditioning_precision` is the precision of the prior over z (zero
        gives the bare conditional, which is improper in z).
        """
        A = np.atleast_2d(np.asarray(gain, dtype=float))
        mu = np.concatenate([np.ravel(response_mean), np.ravel(conditioning_mean)]).astype(float)
        nx, nz = A.shape
        L_q = cholesky_jittered(residual_cov, "residual covariance")
        Q_inv = _inverse_from_cholesky(L_q)
        Q_inv_A = Q_inv @ A
        K = np.empty((nx + nz, nx + nz))
        K[:nx, :nx] = Q_inv
        K[:nx, nx:] = -Q_inv_A
        K[nx:, :nx] = -Q_inv_A.T
        K[nx:, nx:] = A.T @ Q_inv_A
        g = -0.5 * nx * LOG_2PI - np.sum(np.log(np.diag(L_q)))
        if conditioning_precision is not None:
            Lam = np.atleast_2d(np.asarray(conditioning_precision, dtype=float))
            K[nx:, nx:] += Lam
            sign, logdet = np.linalg.slogdet(Lam)
            if sign > 0:
                g += 0.5 * logdet - 0.5 * nz * LOG_2PI
        h = K @ mu
        g -= 0.5 * mu @ h
        return cls(tuple(response) + tuple(conditioning), K, h, g)

    # ── Introspection ─────────────────────────────────────────────

    @property
    def dim(self):
        return self.h.size

    def block(self, var):
        return self._slices[var]

    def is_proper(self):
        try:
            np.linalg.cholesky(self.K)
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(np.isfinite(self.K)))

    def is_unit(self):
        return not np.any(self.K) and not np.any(self.h)

    def __repr__(self):
        scope = ", ".join(str(v) for v in self.scope)
        return f"GaussianFactor([{scope}], dim={self.dim}, g={self.g:.4g})"

    # ── Alignment ─────────────────────────────────────────────────

    def _aligned(self, scope):
        """(K, h) embedded in a larger sorted scope, zero-padded."""
        n = sum(v.dim for v in scope)
        K = np.zeros((n, n))
        h = np.zeros(n)
        idx = []
        start = 0
        positions = {}
        for v in scope:
            positions[v] = (start, v)
            start += v.dim
        for v in self.scope:
            if v not in positions:
                raise ScopeDimMismatch(f"variable {v} is not in the target scope")
            offset, target = positions[v]
            if target.dim != v.dim:
                raise ScopeDimMismatch(f"variable {v} has dimension {v.dim} here and {target.dim} there")
            idx.extend(range(offset, offset + v.dim))
        idx = np.asarray(idx, dtype=int)
        K[np.ix_(idx, idx)] = self.K
        h[idx] = self.h
        return K, h

    def _union_scope(self, other):
        merged = {v: v for v in self.scope}
        for v in other.scope:
            if v in merged and merged[v].dim != v.dim:
                raise ScopeDimMismatch(f"variable {v} has dimension {merged[v].dim} and {v.dim}")
            merged.setdefault(v, v)
        return tuple(sorted(merged))

    def _indices(self, variables):
        return np.concatenate(
            [np.arange(self._slices[v].start, self._slices[v].stop) for v in variables]
        ).astype(int) if variables else np.zeros(0, dtype=int)

    # ── Algebra ───────────────────────────────────────────────────

    def multiply(self, other):
        if self.scope == other.scope:
            return GaussianFactor(self.scope, self.K + other.K, self.h + other.h, self.g + other.g)
        scope = self._union_scope(other)
        Ka, ha = self._aligned(scope)
        Kb, hb = other._aligned(scope)
        return GaussianFactor(scope, Ka + Kb, ha + hb, self.g + other.g)

    def divide(self, other):
        if self.scope == other.scope:
            return GaussianFactor(self.scope, self.K - other.K, self.h - other.h, self.g - other.g)
        if not set(other.scope) <= set(self.scope):
            raise ScopeDimMismatch("divisor scope must be contained in the dividend scope")
        Kb, hb = other._aligned(self.scope)
        return GaussianFactor(self.scope, self.K - Kb, self.h - hb, self.g - other.g)

    def marginalize(self, keep):
        """Integrate out every variable not in `keep` (Schur complement on the eliminated block)."""
        keep_set = set(keep)
        if not keep_set <= set(self.scope):
            missing = ", ".join(str(v) for v in keep_set - set(self.scope))
            raise ScopeDimMismatch(f"cannot keep variables outside the scope: {missing}")
        kept = [v for v in self.scope if v in keep_set]
        elim = [v for v in self.scope if v not in keep_set]
        if not elim:
            return GaussianFactor(self.scope, self.K.copy(), self.h.copy(), self.g)

        k = self._indices(kept)
        e = self._indices(elim)
        K_ee = self.K[np.ix_(e, e)]
        try:
            if not np.all(np.isfinite(K_ee)):
                raise np.linalg.LinAlgError("non-finite block")
            L = np.linalg.cholesky(K_ee)
        except np.linalg.LinAlgError:
            names = ", ".join(str(v) for v in elim)
            raise SingularEliminationBlock(f"precision block over {{{names}}} is not invertible") from None

        K_ke = self.K[np.ix_(k, e)]
        h_e = self.h[e]
        solved_K = cho_solve((L, True), K_ke.T)
        solved_h = cho_solve((L, True), h_e)
        K = self.K[np.ix_(k, k)] - K_ke @ solved_K
        h = self.h[k] - K_ke @ solved_h
        g = self.g + 0.5 * (e.size * LOG_2PI - 2.0 * np.sum(np.log(np.diag(L))) + h_e @ solved_h)
        return GaussianFactor(kept, K, h, g)

    def observe(self, var, value, sigma_obs):
        """Soft evidence: multiply in the likelihood N(value, σ_obs²·I) over `var`."""
        if var not in self._slices:
            raise ScopeDimMismatch(f"cannot observe {var}: not in scope")
        if not sigma_obs > 0:
            raise ConfigError(f"observation sigma must be positive, got {sigma_obs}")
        value = np.asarray(value, dtype=float).reshape(-1)
        var = self.scope[list(self.scope).index(var)]
        if value.size != var.dim:
            raise ScopeDimMismatch(f"observed value has {value.size} entries, {var} has dimension {var.dim}")
        prec = 1.0 / sigma_obs ** 2
        g = -0.5 * prec * value @ value - 0.5 * var.dim * (LOG_2PI + 2.0 * np.log(sigma_obs))
        likelihood = GaussianFactor((var,), prec * np.eye(var.dim), prec * value, g)
        return self.multiply(likelihood)

    def to_moments(self):
        """(μ, Σ); requires K positive definite (after the jitter ladder)."""
        L = cholesky_jittered(self.K, "precision")
        cov = _inverse_from_cholesky(L)
        mean = cho_solve((L, True), self.h)
        return mean, 0.5 * (cov + cov.T)

    def marginal_moments(self, var):
        """Moments of a single variable of a proper factor."""
        mean, cov = self.marginalize([var]).to_moments()
        return mean, cov


def max_param_delta(a, b):
    """Largest absolute parameter difference between two factors on their common variables.

    Moment parameters are compared when both factors are proper; otherwise
    the canonical (K, h) entries are compared, each scaled by its magnitude.
    """
    common = [v for v in a.scope if v in b._slices]
    if not common:
        raise ScopeDimMismatch("factors share no variables")
    for v in common:
        other = b.scope[list(b.scope).index(v)]
        if other.dim != v.dim:
            raise ScopeDimMismatch(f"variable {v} has dimension {v.dim} and {other.dim}")
    ia, ib = a._indices(common), b._indices(common)

    if a.is_proper() and b.is_proper():
        mu_a, cov_a = a.to_moments()
        mu_b, cov_b = b.to_moments()
        return float(max(
            np.max(np.abs(mu_a[ia] - mu_b[ib])),
            np.max(np.abs(cov_a[np.ix_(ia, ia)] - cov_b[np.ix_(ib, ib)])),
        ))

    Ka, Kb = a.K[np.ix_(ia, ia)], b.K[np.ix_(ib, ib)]
    ha, hb = a.h[ia], b.h[ib]
    k_scale = max(1.0, np.max(np.abs(Ka)), np.max(np.abs(Kb)))
    h_scale = max(1.0, np.max(np.abs(ha)), np.max(np.abs(hb)))
    return float(max(np.max(np.abs(Ka - Kb)) / k_scale, np.max(np.abs(ha - hb)) / h_scale))
