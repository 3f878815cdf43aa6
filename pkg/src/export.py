"""
Result Export
Writes an estimate as an ASCII PLY point cloud (features and camera centres
told apart by colour) or its error trace as CSV.
"""

import logging
import os

from src.errors import ConfigError
from src.trace_analysis import analyze

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ("pointcloud", "trace-csv")
FEATURE_RGB = (40, 40, 40)
CAMERA_RGB = (220, 30, 30)


def _ensure_dir(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def pointcloud_lines(estimate):
    """PLY text lines: one vertex per feature mean and per camera centre (z = 0 in 2D)."""
    vertices = []
    for i in sorted(estimate.features):
        vertices.append((estimate.features[i].mean, FEATURE_RGB))
    for j, pose in sorted(estimate.poses().items()):
        vertices.append((pose.center, CAMERA_RGB))

    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for xyz, (r, g, b) in vertices:
        x, y = xyz[0], xyz[1]
        z = xyz[2] if len(xyz) > 2 else 0.0
        lines.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}")
    return lines


def export_pointcloud(estimate, path):
    _ensure_dir(path)
    lines = pointcloud_lines(estimate)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.info("Wrote point cloud with %d features and %d cameras to %s",
                len(estimate.features), len(estimate.cameras), path)
    return path


def export_trace_csv(estimate, path):
    df, _ = analyze(getattr(estimate, "trace", []))
    _ensure_dir(path)
    df.to_csv(path, index=False)
    logger.info("Wrote %d-iteration error trace to %s", len(df), path)
    return path


def export(estimate, fmt, path):
    if fmt == "pointcloud":
        return export_pointcloud(estimate, path)
    if fmt == "trace-csv":
        return export_trace_csv(estimate, path)
    raise ConfigError(f"unknown export format {fmt!r}; choose from {', '.join(EXPORT_FORMATS)}")
