"""
Synthetic Scene Generator
Generates 2D and 3D structure-and-motion scenes (features inside a ball,
cameras on a surrounding sphere facing the centre), perturbs priors and
observations, and scores estimates by mean reprojection error.
"""

from dataclasses import dataclass, field, replace
import logging
from typing import Optional

import numpy as np
import pandas as pd

from src.errors import ConfigError, InfeasibleVisibility, ResultMismatch, SceneFormatError
from src.geometry import (
    Calibration, Pose, WorldMode, degree_representable, degree_representable_variances, look_at_pose, project,
    reprojection_distances,
)
from src.graph import MIN_VIEWS_PER_FEATURE, Track
from src.propagation import Marginal, VariableBeliefs

logger = logging.getLogger(__name__)

# --- Configuration ---
FEATURE_RADIUS = 2.0       # features uniform inside this ball
CAMERA_RADIUS = 10.0       # camera centres uniform on this sphere
DEFAULT_SIGMA_OBS = 1e-4
DEFAULT_DROP_PROB = 0.3    # 2D only: fraction of projections removed
MAX_VISIBILITY_RETRIES = 100
PRIOR_STD_FLOOR = 1e-4


@dataclass
class Camera:
    pose: object
    calib: Calibration


@dataclass
class Scene:
    """Cameras, features and tracks; features/poses are ground truth when `ground_truth` is set."""

    mode: WorldMode
    cameras: dict
    features: dict
    tracks: list
    ground_truth: bool = True
    priors: Optional[VariableBeliefs] = None

    def calibrations(self):
        return {j: cam.calib for j, cam in self.cameras.items()}

    def observations(self):
        return [(t.cam, t.feat, t.uv) for t in self.tracks]

    def validate(self):
        """Check track references and the two-view requirement; raises SceneFormatError."""
        views = {}
        for t in self.tracks:
            if t.cam not in self.cameras:
                raise SceneFormatError(f"track references unknown camera {t.cam}")
            if self.features and t.feat not in self.features:
                raise SceneFormatError(f"track references unknown feature {t.feat}")
            if t.uv.size != self.mode.image_dim:
                raise SceneFormatError(
                    f"track ({t.cam}, {t.feat}) has {t.uv.size} image coordinates, expected {self.mode.image_dim}"
                )
            views[t.feat] = views.get(t.feat, 0) + 1
        thin = sorted(i for i, n in views.items() if n < MIN_VIEWS_PER_FEATURE)
        if thin:
            raise SceneFormatError(f"feature(s) {thin} appear in fewer than {MIN_VIEWS_PER_FEATURE} tracks")
        return self


@dataclass
class NoiseSpec:
    """Standard deviations of the noise added before fitting priors (angles in degrees)."""

    angle_std: float = 0.0
    position_std: float = 0.0
    feature_std: float = 0.0
    pixel_std: float = 0.0
    visibility_drop_prob: float = 0.0
    feature_prior_std: Optional[float] = None   # wide priors centred on the world origin
    prior_std_floor: float = PRIOR_STD_FLOOR

    def __post_init__(self):
        for name in ("angle_std", "position_std", "feature_std", "pixel_std", "prior_std_floor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.visibility_drop_prob < 1.0:
            raise ConfigError("visibility_drop_prob must lie in [0, 1)")
        if self.feature_prior_std is not None and self.feature_prior_std <= 0:
            raise ConfigError("feature_prior_std must be positive when given")


# ── Sampling helpers ──────────────────────────────────────────────────

def _uniform_ball(rng, n, dim, radius):
    directions = rng.normal(size=(n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / dim)
    return directions * radii[:, None]


def _uniform_sphere(rng, n, dim, radius):
    directions = rng.normal(size=(n, dim))
    return radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)


def _exact_tracks(mode, cameras, features, sigma_obs, keep=None):
    tracks = []
    for j, cam in cameras.items():
        for i, X in features.items():
            if keep is not None and not keep[j, i]:
                continue
            uv = project(cam.pose, cam.calib, X, mode)
            tracks.append(Track(cam=j, feat=i, uv=uv, sigma=sigma_obs))
    return tracks


def _place_cameras(rng, mode, n_cams):
    centres = _uniform_sphere(rng, n_cams, mode.world_dim, CAMERA_RADIUS)
    origin = np.zeros(mode.world_dim)
    calib = Calibration.identity(mode)
    cameras = {}
    for j, c in enumerate(centres):
        pose = look_at_pose(c, origin, mode)
        cameras[j] = Camera(pose=Pose(pose.center, degree_representable(pose.angles)), calib=calib)
    return cameras


# ── Generators ────────────────────────────────────────────────────────

def generate_3d(n_cams, n_feats, seed=None, sigma_obs=DEFAULT_SIGMA_OBS):
    """Features in the radius-2 ball, cameras on the radius-10 sphere; every feature visible to every camera."""
    if n_cams < 2 or n_feats < 1:
        raise ConfigError("a 3D scene needs at least 2 cameras and 1 feature")
    mode = WorldMode.THREE_D
    rng = np.random.default_rng(seed)
    points = _uniform_ball(rng, n_feats, mode.world_dim, FEATURE_RADIUS)
    cameras = _place_cameras(rng, mode, n_cams)
    features = {i: X for i, X in enumerate(points)}
    tracks = _exact_tracks(mode, cameras, features, sigma_obs)
    logger.info("Generated 3D scene: %d cameras, %d features, %d tracks", n_cams, n_feats, len(tracks))
    return Scene(mode=mode, cameras=cameras, features=features, tracks=tracks)


def generate_2d(n_cams, n_feats, seed=None, drop_prob=DEFAULT_DROP_PROB, sigma_obs=DEFAULT_SIGMA_OBS):
    """2D scene on a 1D image line with randomly dropped projections.

    Drops are redrawn until every feature keeps at least two views and every
    camera keeps at least one.
    """
    if n_cams < 2 or n_feats < 1:
        raise ConfigError("a 2D scene needs at least 2 cameras and 1 feature")
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigError("drop probability must lie in [0, 1)")
    mode = WorldMode.TWO_D
    rng = np.random.default_rng(seed)
    points = _uniform_ball(rng, n_feats, mode.world_dim, FEATURE_RADIUS)
    cameras = _place_cameras(rng, mode, n_cams)
    features = {i: X for i, X in enumerate(points)}

    for attempt in range(1, MAX_VISIBILITY_RETRIES + 1):
        keep = rng.random((n_cams, n_feats)) >= drop_prob
        if np.all(keep.sum(axis=0) >= MIN_VIEWS_PER_FEATURE) and np.all(keep.sum(axis=1) >= 1):
            break
    else:
        raise InfeasibleVisibility(
            f"drop probability {drop_prob} left a feature under-observed after {MAX_VISIBILITY_RETRIES} draws"
        )

    tracks = _exact_tracks(mode, cameras, features, sigma_obs, keep)
    logger.info("Generated 2D scene: %d cameras, %d features, %d of %d projections kept (attempt %d)",
                n_cams, n_feats, len(tracks), n_cams * n_feats, attempt)
    return Scene(mode=mode, cameras=cameras, features=features, tracks=tracks)


# ── Priors and noise ──────────────────────────────────────────────────

def perturb_priors(scene, noise, seed=None):
    """Priors centred on noisy ground truth; covariances are the noise variances.

    Observations are left untouched. Angle noise is given in degrees.
    """
    if not scene.ground_truth:
        raise SceneFormatError("priors can only be perturbed from a ground-truth scene")
    mode = scene.mode
    rng = np.random.default_rng(seed)
    floor = noise.prior_std_floor

    pos_std = max(noise.position_std, floor)
    ang_std = max(np.deg2rad(noise.angle_std), floor)
    cameras = {}
    for j in sorted(scene.cameras):
        pose = scene.cameras[j].pose
        center = pose.center + rng.normal(0.0, noise.position_std, mode.world_dim)
        angles = degree_representable(pose.angles + rng.normal(0.0, np.deg2rad(noise.angle_std), mode.angle_dim))
        variances = np.concatenate([
            np.full(mode.world_dim, pos_std ** 2),
            degree_representable_variances(np.full(mode.angle_dim, ang_std ** 2)),
        ])
        cameras[j] = Marginal(np.concatenate([center, angles]), np.diag(variances))

    features = {}
    if noise.feature_prior_std is not None:
        cov = noise.feature_prior_std ** 2 * np.eye(mode.world_dim)
        for i in sorted(scene.features):
            features[i] = Marginal(np.zeros(mode.world_dim), cov)
    else:
        feat_std = max(noise.feature_std, floor)
        for i in sorted(scene.features):
            mean = scene.features[i] + rng.normal(0.0, noise.feature_std, mode.world_dim)
            features[i] = Marginal(mean, feat_std ** 2 * np.eye(mode.world_dim))
    return VariableBeliefs(mode=mode, features=features, cameras=cameras)


def observation_noise(scene, sigma, seed=None):
    """Copy of the scene with N(0, σ²·I) added to every observed projection."""
    if sigma < 0:
        raise ConfigError("observation noise must be non-negative")
    if sigma == 0:
        return scene
    rng = np.random.default_rng(seed)
    tracks = [replace(t, uv=t.uv + rng.normal(0.0, sigma, t.uv.size)) for t in scene.tracks]
    return replace(scene, tracks=tracks)


def synthetic_scene(mode, n_cams, n_feats, noise, seed=None, sigma_obs=DEFAULT_SIGMA_OBS, drop_prob=None):
    """Generate a scene, corrupt its pixels by `noise.pixel_std` and attach perturbed priors.

    One seed drives three independent streams (geometry, priors, pixels).
    """
    scene_seq, prior_seq, pixel_seq = np.random.SeedSequence(seed).spawn(3)
    if mode is WorldMode.TWO_D:
        drop = noise.visibility_drop_prob if drop_prob is None else drop_prob
        scene = generate_2d(n_cams, n_feats, seed=scene_seq, drop_prob=drop, sigma_obs=sigma_obs)
    else:
        scene = generate_3d(n_cams, n_feats, seed=scene_seq, sigma_obs=sigma_obs)
    scene = observation_noise(scene, noise.pixel_std, seed=pixel_seq)
    return replace(scene, priors=perturb_priors(scene, noise, seed=prior_seq))


def truth_beliefs(scene):
    """The ground truth as a zero-covariance VariableBeliefs (for scoring)."""
    mode = scene.mode
    cameras = {j: Marginal(cam.pose.vector, np.zeros((mode.pose_dim, mode.pose_dim)))
               for j, cam in scene.cameras.items()}
    features = {i: Marginal(X, np.zeros((mode.world_dim, mode.world_dim))) for i, X in scene.features.items()}
    return VariableBeliefs(mode=mode, features=features, cameras=cameras)


# ── Evaluation ────────────────────────────────────────────────────────

def reprojection_residuals(estimate, scene):
    """Per-track reprojection error of the estimate's means (NaN where depth-degenerate)."""
    missing_cams = sorted({t.cam for t in scene.tracks} - set(estimate.cameras))
    missing_feats = sorted({t.feat for t in scene.tracks} - set(estimate.features))
    if missing_cams or missing_feats:
        raise ResultMismatch(f"estimate lacks cameras {missing_cams} / features {missing_feats}")

    poses = estimate.poses()
    cameras = {j: (poses[j], scene.cameras[j].calib) for j in poses if j in scene.cameras}
    errors = reprojection_distances(cameras, estimate.points(), scene.observations(), scene.mode)
    return pd.DataFrame({
        "Camera_ID": [t.cam for t in scene.tracks],
        "Feature_ID": [t.feat for t in scene.tracks],
        "Reprojection_Error": errors,
    })


def reprojection_error(estimate, scene):
    """Mean over tracks of |f(μ_p, μ_X) − x̂|; depth-degenerate tracks are excluded and counted."""
    residuals = reprojection_residuals(estimate, scene)
    excluded = int(residuals["Reprojection_Error"].isna().sum())
    if excluded:
        logger.warning("Excluded %d depth-degenerate track(s) from the reprojection error", excluded)
    if excluded == len(residuals):
        return float("nan")
    return float(residuals["Reprojection_Error"].mean())
