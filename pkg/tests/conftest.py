"""Shared fixtures: project root on sys.path, world modes, small scenes."""

import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from src.geometry import Calibration, Pose, WorldMode, look_at_pose, project  # noqa: E402
from src.graph import Track  # noqa: E402
from src.propagation import Marginal, VariableBeliefs  # noqa: E402
from src.scenes import Camera, Scene  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mode3():
    return WorldMode.THREE_D


@pytest.fixture
def mode2():
    return WorldMode.TWO_D


def random_spd(rng, d, scale=1.0):
    A = rng.normal(size=(d, d))
    return scale * (A.T @ A + np.eye(d))


def stereo_scene(sigma=1e-6, baseline=2.0, X=(0.2, -0.1, 5.0)):
    """Two identity-K cameras at (±baseline/2, 0, 0) facing +z, one feature."""
    mode = WorldMode.THREE_D
    calib = Calibration.identity(mode)
    X = np.asarray(X, dtype=float)
    cameras = {
        0: Camera(Pose(center=[-baseline / 2, 0.0, 0.0], angles=[0.0, 0.0, 0.0]), calib),
        1: Camera(Pose(center=[baseline / 2, 0.0, 0.0], angles=[0.0, 0.0, 0.0]), calib),
    }
    tracks = [Track(j, 0, project(cam.pose, calib, X, mode), sigma) for j, cam in cameras.items()]
    return Scene(mode=mode, cameras=cameras, features={0: X}, tracks=tracks)


def chain_scene_2d(sigma=1e-2):
    """Three 2D cameras, two features: cam 0 sees X0, cam 1 sees both, cam 2 sees X1 (cycle-free graph)."""
    mode = WorldMode.TWO_D
    calib = Calibration.identity(mode)
    features = {0: np.array([-0.5, 0.3]), 1: np.array([0.6, -0.2])}
    centres = {0: [-4.0, -8.0], 1: [0.0, -9.0], 2: [4.0, -8.0]}
    cameras = {j: Camera(look_at_pose(c, [0.0, 0.0], mode), calib) for j, c in centres.items()}
    visible = [(0, 0), (1, 0), (1, 1), (2, 1)]
    tracks = [Track(j, i, project(cameras[j].pose, calib, features[i], mode), sigma) for j, i in visible]
    return Scene(mode=mode, cameras=cameras, features=features, tracks=tracks)


def priors_around_truth(scene, pose_var=1e-3, feat_var=1e-2, offset=0.0, rng=None):
    """Diagonal priors centred on (optionally jittered) ground truth."""
    mode = scene.mode
    rng = rng or np.random.default_rng(0)
    cameras = {
        j: Marginal(cam.pose.vector + offset * rng.normal(size=mode.pose_dim), pose_var * np.eye(mode.pose_dim))
        for j, cam in scene.cameras.items()
    }
    features = {
        i: Marginal(X + offset * rng.normal(size=mode.world_dim), feat_var * np.eye(mode.world_dim))
        for i, X in scene.features.items()
    }
    return VariableBeliefs(mode=mode, features=features, cameras=cameras)
