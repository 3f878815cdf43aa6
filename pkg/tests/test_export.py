"""Tests for point-cloud and trace exports."""

import numpy as np
import pandas as pd
import pytest

from conftest import chain_scene_2d, stereo_scene
from src.errors import ConfigError
from src.export import CAMERA_RGB, FEATURE_RGB, export, pointcloud_lines
from src.propagation import IterationRecord, PosteriorEstimate
from src.scenes import truth_beliefs


def _estimate(scene, trace=()):
    truth = truth_beliefs(scene)
    return PosteriorEstimate(mode=scene.mode, features=truth.features, cameras=truth.cameras, trace=list(trace))


class TestPointCloud:

    def test_header_counts_features_and_cameras(self):
        scene = stereo_scene()
        lines = pointcloud_lines(_estimate(scene))
        assert lines[0] == "ply"
        assert "element vertex 3" in lines
        body = lines[lines.index("end_header") + 1:]
        assert len(body) == 3

    def test_vertex_colours_and_positions(self):
        scene = stereo_scene()
        lines = pointcloud_lines(_estimate(scene))
        body = [row.split() for row in lines[lines.index("end_header") + 1:]]
        np.testing.assert_allclose([float(v) for v in body[0][:3]], scene.features[0])
        assert tuple(int(v) for v in body[0][3:]) == FEATURE_RGB
        np.testing.assert_allclose([float(v) for v in body[1][:3]], scene.cameras[0].pose.center)
        assert tuple(int(v) for v in body[1][3:]) == CAMERA_RGB

    def test_2d_vertices_lie_in_plane(self):
        lines = pointcloud_lines(_estimate(chain_scene_2d()))
        body = [row.split() for row in lines[lines.index("end_header") + 1:]]
        assert len(body) == 2 + 3
        assert all(float(row[2]) == 0.0 for row in body)

    def test_empty_estimate_has_header_only(self, tmp_path):
        scene = stereo_scene()
        empty = PosteriorEstimate(mode=scene.mode, features={}, cameras={})
        path = export(empty, "pointcloud", str(tmp_path / "empty.ply"))
        text = open(path).read().splitlines()
        assert "element vertex 0" in text
        assert text[-1] == "end_header"


class TestTraceExport:

    def test_one_row_per_iteration(self, tmp_path):
        trace = [IterationRecord(k, 1.0 / k, 5, False, True, 1e-8, 0) for k in range(1, 5)]
        path = export(_estimate(stereo_scene(), trace), "trace-csv", str(tmp_path / "sub" / "trace.csv"))
        df = pd.read_csv(path)
        assert len(df) == 4
        assert "Best_So_Far" in df.columns
        assert df["Accepted"].sum() == 1

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            export(_estimate(stereo_scene()), "obj", str(tmp_path / "x.obj"))
