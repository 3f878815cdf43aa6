"""
Projective Camera Geometry
Pinhole camera model in 2D and 3D worlds: Euler rotations, camera matrices,
the projection function f(p, X), reprojection distances and a linear
triangulation used to cross-check the solver.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from src.errors import ConfigError, DegenerateGeometry, DepthDegenerate

logger = logging.getLogger(__name__)

# --- Numerical thresholds ---
DEPTH_EPS = 1e-9          # |homogeneous depth| below this is the principal plane
TRIANGULATION_RANK_TOL = 1e-10
EULER_ORDER = "ZYX"       # intrinsic: R = Rz(θz) · Ry(θy) · Rx(θx)

# --- File units ---
DEG_PER_RAD_SQ = np.rad2deg(1.0) ** 2
ULP_SEARCH = 16


class WorldMode(Enum):
    """World dimensionality. The 2D world images onto a 1D line."""

    TWO_D = "2d"
    THREE_D = "3d"

    @property
    def world_dim(self):
        return 2 if self is WorldMode.TWO_D else 3

    @property
    def image_dim(self):
        return self.world_dim - 1

    @property
    def angle_dim(self):
        return 1 if self is WorldMode.TWO_D else 3

    @property
    def pose_dim(self):
        return self.world_dim + self.angle_dim

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ConfigError(f"unknown world mode {name!r} (expected '2d' or '3d')") from None


@dataclass(frozen=True)
class Pose:
    """Camera extrinsics: Euclidean centre plus unwrapped Euler angles in radians.

    In 3D the angles are ordered (θx, θy, θz); in 2D there is a single θ.
    """

    center: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).reshape(-1))

    @property
    def vector(self):
        """The flattened pose vector p = [C̃, θ]."""
        return np.concatenate([self.center, self.angles])

    @classmethod
    def from_vector(cls, vec, mode):
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != mode.pose_dim:
            raise ConfigError(f"pose vector has {vec.size} entries, {mode.value} mode needs {mode.pose_dim}")
        return cls(center=vec[:mode.world_dim], angles=vec[mode.world_dim:])

    @classmethod
    def identity(cls, mode):
        return cls(center=np.zeros(mode.world_dim), angles=np.zeros(mode.angle_dim))


@dataclass(frozen=True)
class Calibration:
    """Upper-triangular intrinsic matrix K (3x3 in 3D, 2x2 in 2D)."""

    K: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ConfigError(f"calibration matrix must be square, got shape {K.shape}")
        if not np.allclose(K, np.triu(K)):
            raise ConfigError("calibration matrix must be upper triangular")
        if np.any(np.diag(K) <= 0):
            raise ConfigError("calibration matrix needs strictly positive diagonal entries")
        object.__setattr__(self, "K", K)

    @classmethod
    def identity(cls, mode):
        return cls(np.eye(mode.world_dim))


@dataclass(frozen=True)
class FeaturePoint:
    feature_id: int
    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1)
        if not np.all(np.isfinite(X)):
            raise ConfigError(f"feature {self.feature_id} has non-finite coordinates")
        object.__setattr__(self, "X", X)


@dataclass(frozen=True)
class Projection:
    """Image coordinates of feature i in camera j; `measured` marks an observation x̂."""

    camera_id: int
    feature_id: int
    x: np.ndarray
    measured: bool = field(default=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ConfigError(f"projection ({self.camera_id}, {self.feature_id}) has non-finite coordinates")
        object.__setattr__(self, "x", x)


def _as_point(X):
    return X.X if isinstance(X, FeaturePoint) else np.asarray(X, dtype=float).reshape(-1)


# ── Rotations ─────────────────────────────────────────────────────────

def rotations_from_euler(angles, mode):
    """Batched world-to-camera rotations, shape (N, D, D), from (N, angle_dim) angles."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    if mode is WorldMode.TWO_D:
        c, s = np.cos(angles[:, 0]), np.sin(angles[:, 0])
        return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
    # stored (θx, θy, θz); the intrinsic sequence takes (θz, θy, θx)
    return Rotation.from_euler(EULER_ORDER, angles[:, ::-1]).as_matrix()


def rotation_from_euler(angles, mode):
    return rotations_from_euler(np.reshape(angles, (1, -1)), mode)[0]


def euler_from_rotation(R, mode):
    """Inverse of rotation_from_euler (principal branch)."""
    R = np.asarray(R, dtype=float)
    if mode is WorldMode.TWO_D:
        return np.array([np.arctan2(R[1, 0], R[0, 0])])
    return Rotation.from_matrix(R).as_euler(EULER_ORDER)[::-1]


# ── Angle units ───────────────────────────────────────────────────────
# Files hold degrees; every radian value written out must read back bit for bit.

def _ulp_neighbours(x, steps=ULP_SEARCH):
    up = down = x
    for _ in range(steps):
        up, down = np.nextafter(up, np.inf), np.nextafter(down, -np.inf)
        yield up
        yield down


def _invertible(values, forward, inverse):
    """forward(values), each entry nudged by a few ulps until inverse() returns the input exactly.

    Entries with no exact preimage nearby keep the plain forward value.
    """
    values = np.asarray(values, dtype=float)
    out = np.array(forward(values), dtype=float)
    flat_in, flat_out = values.reshape(-1), out.reshape(-1)
    for k in np.flatnonzero(inverse(flat_out) != flat_in):
        for candidate in _ulp_neighbours(flat_out[k]):
            if inverse(candidate) == flat_in[k]:
                flat_out[k] = candidate
                break
    return out


def _degree_variance(v):
    return v * DEG_PER_RAD_SQ


def _radian_variance(v):
    return v / DEG_PER_RAD_SQ


def degrees_from_radians(angles):
    return _invertible(angles, np.rad2deg, np.deg2rad)


def radians_from_degrees(angles):
    return np.deg2rad(np.asarray(angles, dtype=float))


def degree_representable(angles):
    """The nearest radians that survive a degree round trip unchanged."""
    return np.deg2rad(np.rad2deg(np.asarray(angles, dtype=float)))


def degree_variances(variances):
    return _invertible(variances, _degree_variance, _radian_variance)


def radian_variances(variances):
    return _radian_variance(np.asarray(variances, dtype=float))


def degree_representable_variances(variances):
    return _radian_variance(_degree_variance(np.asarray(variances, dtype=float)))


# ── Camera model ──────────────────────────────────────────────────────

def camera_matrix(pose, calib, mode):
    """P = K · R · [I | −C̃], a D x (D+1) matrix."""
    D = mode.world_dim
    R = rotation_from_euler(pose.angles, mode)
    return calib.K @ R @ np.hstack([np.eye(D), -pose.center.reshape(D, 1)])


def project(pose, calib, X, mode):
    """The projection function f: homogenize X, apply P, dehomogenize.

    Returns the Euclidean image coordinates (length D-1).
    """
    X = _as_point(X)
    x_h = camera_matrix(pose, calib, mode) @ np.append(X, 1.0)
    depth = x_h[-1]
    if abs(depth) < DEPTH_EPS:
        raise DepthDegenerate(depth)
    return x_h[:-1] / depth


def project_batch(pose_vectors, points, calib, mode):
    """Vectorized f over rows of (N, pose_dim) pose vectors and (N, D) points."""
    pose_vectors = np.atleast_2d(np.asarray(pose_vectors, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    D = mode.world_dim
    R = rotations_from_euler(pose_vectors[:, D:], mode)
    cam = np.einsum("nij,nj->ni", R, points - pose_vectors[:, :D])
    x_h = cam @ calib.K.T
    depth = x_h[:, -1]
    bad = np.abs(depth) < DEPTH_EPS
    if np.any(bad):
        raise DepthDegenerate(depth[bad][0])
    return x_h[:, :-1] / depth[:, None]


def look_at_pose(center, target, mode):
    """Pose at `center` whose viewing (depth) axis points at `target`.

    In 3D the up-vector is world z, falling back to world y when the camera
    sits on the z axis through the target.
    """
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    forward /= np.linalg.norm(forward)
    if mode is WorldMode.TWO_D:
        # last row of the 2D rotation is (sin θ, cos θ)
        return Pose(center=center, angles=[np.arctan2(forward[0], forward[1])])
    up = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(forward, up)) < 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    return Pose(center=center, angles=euler_from_rotation(R, mode))


def similarity_transform(pose, X, scale, rotation, translation, mode):
    """Apply X -> s·Q·X + t to a pose and a set of points.

    The camera rotation is compensated (R -> R·Qᵀ), so projections are unchanged.
    Returns (new_pose, new_points).
    """
    Q = np.asarray(rotation, dtype=float)
    t = np.asarray(translation, dtype=float)
    new_center = scale * Q @ pose.center + t
    R = rotation_from_euler(pose.angles, mode) @ Q.T
    new_pose = Pose(center=new_center, angles=euler_from_rotation(R, mode))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return new_pose, scale * X @ Q.T + t


# ── Evaluation helpers ────────────────────────────────────────────────

def reprojection_distances(cameras, features, observations, mode):
    """Euclidean distance between f(p_j, X^i) and x̂ for each (j, i, x̂).

    `cameras` maps camera id -> (Pose, Calibration); `features` maps feature
    id -> coordinates. Depth-degenerate tracks come back as NaN.
    """
    distances = []
    for cam_id, feat_id, uv in observations:
        pose, calib = cameras[cam_id]
        try:
            x = project(pose, calib, features[feat_id], mode)
        except DepthDegenerate:
            distances.append(np.nan)
            continue
        distances.append(float(np.linalg.norm(x - np.asarray(uv, dtype=float))))
    return np.asarray(distances, dtype=float)


# ── Triangulation ─────────────────────────────────────────────────────

def triangulate_oracle(observations, mode):
    """Linear (DLT) triangulation from (Pose, Calibration, Projection) triples.

    Each view contributes the rows x_k·P[-1] − P[k] of a homogeneous system
    A·X̃ = 0, solved by SVD.
    """
    if len(observations) < 2:
        raise DegenerateGeometry(f"triangulation needs at least 2 views, got {len(observations)}")
    rows = []
    for pose, calib, proj in observations:
        P = camera_matrix(pose, calib, mode)
        x = proj.x if isinstance(proj, Projection) else np.asarray(proj, dtype=float).reshape(-1)
        for k in range(mode.image_dim):
            rows.append(x[k] * P[-1] - P[k])
    A = np.vstack(rows)
    # row-normalize so distant cameras don't dominate
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    A = A / np.where(norms > 0, norms, 1.0)
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > TRIANGULATION_RANK_TOL * s[0]))
    if rank < mode.world_dim:
        raise DegenerateGeometry(
            f"triangulation system has rank {rank} < {mode.world_dim} (no parallax)"
        )
    X_h = Vt[-1]
    if abs(X_h[-1]) < TRIANGULATION_RANK_TOL:
        raise DegenerateGeometry("triangulated point is at infinity")
    return X_h[:-1] / X_h[-1]
