"""
Scene & Result Files
Reads and writes versioned JSON scene/result documents, then cleans loaded
scenes (unknown references, under-observed features) and reports what was removed.
"""

import json
import logging
import os
import re

import numpy as np

from src.errors import ConfigError, ResultMismatch, SceneFormatError
from src.geometry import (
    Calibration, Pose, WorldMode, degree_variances, degrees_from_radians, radian_variances, radians_from_degrees,
)
from src.graph import MIN_VIEWS_PER_FEATURE, Track
from src.propagation import IterationRecord, Marginal, PosteriorEstimate, VariableBeliefs
from src.scenes import Camera, Scene

logger = logging.getLogger(__name__)

SCENE_FORMAT = "sambp-scene"
RESULT_FORMAT = "sambp-result"
FORMAT_VERSION = 1
JSON_INDENT = 2

_VAR_NAME = re.compile(r"^(p|X)(\d+)$")


# ── Small converters ──────────────────────────────────────────────────

def _floats(values):
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


def _pose_to_file(vector, mode):
    """Pose vector with its angle block converted to degrees."""
    out = np.array(vector, dtype=float)
    out[mode.world_dim:] = degrees_from_radians(out[mode.world_dim:])
    return out


def _pose_from_file(vector, mode):
    out = np.array(vector, dtype=float)
    out[mode.world_dim:] = radians_from_degrees(out[mode.world_dim:])
    return out


def _pose_variances_to_file(variances, mode):
    out = np.array(variances, dtype=float)
    out[mode.world_dim:] = degree_variances(out[mode.world_dim:])
    return out


def _pose_variances_from_file(variances, mode):
    out = np.array(variances, dtype=float)
    out[mode.world_dim:] = radian_variances(out[mode.world_dim:])
    return out


def _marginal_to_file(marginal, is_pose, mode):
    if is_pose:
        return _pose_to_file(marginal.mean, mode), _pose_variances_to_file(np.diag(marginal.cov), mode)
    return marginal.mean, np.diag(marginal.cov)


def _marginal_from_file(mean, cov_diag, is_pose, mode):
    mean = np.asarray(mean, dtype=float)
    cov_diag = np.asarray(cov_diag, dtype=float)
    if mean.shape != cov_diag.shape:
        raise SceneFormatError("prior mean and cov_diag lengths differ")
    if is_pose:
        if mean.size != mode.pose_dim:
            raise SceneFormatError(f"pose prior needs {mode.pose_dim} entries, got {mean.size}")
        return Marginal(_pose_from_file(mean, mode), np.diag(_pose_variances_from_file(cov_diag, mode)))
    if mean.size != mode.world_dim:
        raise SceneFormatError(f"feature prior needs {mode.world_dim} entries, got {mean.size}")
    return Marginal(mean, np.diag(cov_diag))


def _dump(document, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(document, fh, indent=JSON_INDENT, sort_keys=True)
        fh.write("\n")


def _load(path, expected_format):
    try:
        with open(path) as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise SceneFormatError(f"{path} not found") from None
    except json.JSONDecodeError as err:
        raise SceneFormatError(f"{path} is not valid JSON ({err})") from err
    if not isinstance(document, dict) or document.get("format") != expected_format:
        raise SceneFormatError(f"{path} is not a {expected_format} document")
    if document.get("version") != FORMAT_VERSION:
        raise SceneFormatError(f"{path} has unsupported version {document.get('version')!r}")
    return document


def _unique_ids(entries, what):
    ids = [int(e["id"]) for e in entries]
    if len(ids) != len(set(ids)):
        raise SceneFormatError(f"duplicate {what} ids")
    return ids


# ── Scenes ────────────────────────────────────────────────────────────

def scene_to_document(scene):
    mode = scene.mode
    cameras = []
    for j in sorted(scene.cameras):
        cam = scene.cameras[j]
        entry = {"id": int(j), "K": _floats(cam.calib.K)}
        if scene.ground_truth and cam.pose is not None:
            entry["pose"] = {
                "center": _floats(cam.pose.center),
                "angles_deg": _floats(degrees_from_radians(cam.pose.angles)),
            }
        cameras.append(entry)

    document = {
        "format": SCENE_FORMAT,
        "version": FORMAT_VERSION,
        "mode": mode.value,
        "ground_truth": bool(scene.ground_truth),
        "cameras": cameras,
        "features": [{"id": int(i), "xyz": _floats(scene.features[i])} for i in sorted(scene.features)],
        "tracks": [
            {"cam": int(t.cam), "feat": int(t.feat), "uv": _floats(t.uv), "sigma": float(t.sigma)}
            for t in sorted(scene.tracks, key=lambda t: (t.cam, t.feat))
        ],
    }
    if scene.priors is not None:
        priors = []
        for j in sorted(scene.priors.cameras):
            mean, diag = _marginal_to_file(scene.priors.cameras[j], True, mode)
            priors.append({"var": f"p{j}", "mean": _floats(mean), "cov_diag": _floats(diag)})
        for i in sorted(scene.priors.features):
            mean, diag = _marginal_to_file(scene.priors.features[i], False, mode)
            priors.append({"var": f"X{i}", "mean": _floats(mean), "cov_diag": _floats(diag)})
        document["priors"] = priors
    return document


def document_to_scene(document):
    """Parse a scene document; structural problems raise SceneFormatError."""
    try:
        mode = WorldMode.parse(document["mode"])
        camera_entries = document["cameras"]
        _unique_ids(camera_entries, "camera")
        _unique_ids(document.get("features", []), "feature")

        cameras = {}
        n = mode.image_dim + 1
        for entry in camera_entries:
            K = np.asarray(entry["K"], dtype=float)
            if K.size != n * n:
                raise SceneFormatError(f"camera {entry['id']} K needs {n * n} entries, got {K.size}")
            pose = None
            if "pose" in entry:
                pose = Pose(
                    center=np.asarray(entry["pose"]["center"], dtype=float),
                    angles=radians_from_degrees(entry["pose"]["angles_deg"]),
                )
            cameras[int(entry["id"])] = Camera(pose=pose, calib=Calibration(K.reshape(n, n)))

        features = {int(e["id"]): np.asarray(e["xyz"], dtype=float) for e in document.get("features", [])}
        tracks = [
            Track(cam=int(t["cam"]), feat=int(t["feat"]), uv=t["uv"], sigma=float(t["sigma"]))
            for t in document["tracks"]
        ]

        priors = None
        if "priors" in document:
            prior_cams, prior_feats = {}, {}
            for entry in document["priors"]:
                match = _VAR_NAME.match(str(entry["var"]))
                if match is None:
                    raise SceneFormatError(f"unknown prior variable {entry['var']!r}")
                is_pose = match.group(1) == "p"
                marginal = _marginal_from_file(entry["mean"], entry["cov_diag"], is_pose, mode)
                (prior_cams if is_pose else prior_feats)[int(match.group(2))] = marginal
            priors = VariableBeliefs(mode=mode, features=prior_feats, cameras=prior_cams)
    except (KeyError, TypeError, ConfigError) as err:
        raise SceneFormatError(f"malformed scene document ({err!r})") from err

    ground_truth = bool(document.get("ground_truth", False)) and all(c.pose is not None for c in cameras.values())
    return Scene(mode=mode, cameras=cameras, features=features, tracks=tracks,
                 ground_truth=ground_truth, priors=priors)


def save_scene(scene, path):
    _dump(scene_to_document(scene), path)
    logger.info("Wrote scene with %d cameras, %d tracks to %s", len(scene.cameras), len(scene.tracks), path)


def clean_scene(scene, drop_underconstrained=False):
    """Drop tracks with unknown references (and optionally under-observed features).

    Returns the cleaned scene and a report of counts removed.
    """
    report = {"tracks_loaded": len(scene.tracks)}
    known_feats = set(scene.features) | (set(scene.priors.features) if scene.priors else set())

    tracks = [t for t in scene.tracks if t.cam in scene.cameras]
    report["tracks_unknown_camera"] = len(scene.tracks) - len(tracks)
    if known_feats:
        kept = [t for t in tracks if t.feat in known_feats]
        report["tracks_unknown_feature"] = len(tracks) - len(kept)
        tracks = kept
    else:
        report["tracks_unknown_feature"] = 0

    views = {}
    for t in tracks:
        views[t.feat] = views.get(t.feat, 0) + 1
    thin = sorted(i for i, n in views.items() if n < MIN_VIEWS_PER_FEATURE)
    report["features_underconstrained"] = len(thin)
    features, priors = scene.features, scene.priors
    if thin and drop_underconstrained:
        tracks = [t for t in tracks if t.feat not in thin]
        features = {i: X for i, X in scene.features.items() if i not in thin}
        if priors is not None:
            priors = VariableBeliefs(priors.mode, {i: m for i, m in priors.features.items() if i not in thin},
                                     priors.cameras)
        report["features_dropped"] = len(thin)
    else:
        report["features_dropped"] = 0

    report["tracks_removed"] = report["tracks_loaded"] - len(tracks)
    report["tracks_remaining"] = len(tracks)
    if report["tracks_removed"]:
        logger.warning("Cleaning removed %d of %d tracks", report["tracks_removed"], report["tracks_loaded"])
    cleaned = Scene(mode=scene.mode, cameras=scene.cameras, features=features, tracks=tracks,
                    ground_truth=scene.ground_truth, priors=priors)
    return cleaned, report


def load_scene(path, drop_underconstrained=False):
    """Full loading pipeline: read → parse → clean → return (scene, report)."""
    scene = document_to_scene(_load(path, SCENE_FORMAT))
    logger.info("Loaded %s scene from %s: %d cameras, %d tracks", scene.mode.value, path,
                len(scene.cameras), len(scene.tracks))
    return clean_scene(scene, drop_underconstrained)


# ── Results ───────────────────────────────────────────────────────────

def result_to_document(estimate, config=None, seed=None):
    mode = estimate.mode
    cameras = []
    for j in sorted(estimate.cameras):
        mean, diag = _marginal_to_file(estimate.cameras[j], True, mode)
        cameras.append({"id": int(j), "mean": _floats(mean), "cov_diag": _floats(diag)})
    features = []
    for i in sorted(estimate.features):
        mean, diag = _marginal_to_file(estimate.features[i], False, mode)
        features.append({"id": int(i), "mean": _floats(mean), "cov_diag": _floats(diag)})

    return {
        "format": RESULT_FORMAT,
        "version": FORMAT_VERSION,
        "mode": mode.value,
        "seed": seed,
        "config": config.to_dict() if config is not None else None,
        "cameras": cameras,
        "features": features,
        "trace": [
            {
                "iteration": int(r.iteration), "error": float(r.error), "inner_sweeps": int(r.inner_sweeps),
                "inflated": bool(r.inflated), "converged": bool(r.converged),
                "final_delta": float(r.final_delta), "skipped_messages": int(r.skipped_messages),
            }
            for r in getattr(estimate, "trace", [])
        ],
        "prior_error": float(getattr(estimate, "prior_error", float("nan"))),
        "best_iteration": int(getattr(estimate, "best_iteration", 0)),
        "calibration_gap": float(getattr(estimate, "calibration_gap", 0.0)),
    }


def document_to_result(document):
    try:
        mode = WorldMode.parse(document["mode"])
        cameras = {
            int(e["id"]): _marginal_from_file(e["mean"], e["cov_diag"], True, mode) for e in document["cameras"]
        }
        features = {
            int(e["id"]): _marginal_from_file(e["mean"], e["cov_diag"], False, mode) for e in document["features"]
        }
        trace = [IterationRecord(**record) for record in document.get("trace", [])]
    except (KeyError, TypeError, ConfigError) as err:
        raise SceneFormatError(f"malformed result document ({err!r})") from err
    return PosteriorEstimate(
        mode=mode, features=features, cameras=cameras, trace=trace,
        calibration_gap=float(document.get("calibration_gap", 0.0)),
        prior_error=float(document.get("prior_error", float("nan"))),
        best_iteration=int(document.get("best_iteration", 0)),
    )


def save_result(estimate, path, config=None, seed=None):
    _dump(result_to_document(estimate, config, seed), path)
    logger.info("Wrote result with %d cameras, %d features to %s",
                len(estimate.cameras), len(estimate.features), path)


def load_result(path):
    return document_to_result(_load(path, RESULT_FORMAT))


def check_result_matches(estimate, scene):
    """Raise ResultMismatch unless the result covers exactly the scene's cameras and observed features."""
    if estimate.mode is not scene.mode:
        raise ResultMismatch(f"result is {estimate.mode.value}, scene is {scene.mode.value}")
    scene_cams = set(scene.cameras)
    scene_feats = {t.feat for t in scene.tracks}
    if set(estimate.cameras) != scene_cams or set(estimate.features) != scene_feats:
        raise ResultMismatch(
            f"result covers cameras {sorted(estimate.cameras)} / {len(estimate.features)} features; "
            f"scene has cameras {sorted(scene_cams)} / {len(scene_feats)} observed features"
        )
