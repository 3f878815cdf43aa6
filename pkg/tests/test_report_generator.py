"""Tests for the text report, error cell and pose deltas."""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from conftest import chain_scene_2d, stereo_scene
from src.propagation import BpConfig, Marginal, VariableBeliefs
from src.report_generator import error_cell, generate_report, pose_deltas, save_error_cell
from src.scenes import truth_beliefs


class TestPoseDeltas:

    def test_truth_has_zero_deltas(self):
        scene = stereo_scene()
        df = pose_deltas(truth_beliefs(scene), scene)
        assert list(df.columns) == ["Camera_ID", "Position_Delta", "Rotation_Delta_Deg"]
        np.testing.assert_allclose(df["Position_Delta"], 0.0, atol=1e-12)
        np.testing.assert_allclose(df["Rotation_Delta_Deg"], 0.0, atol=1e-5)

    def test_known_offsets(self):
        scene = stereo_scene()
        truth = truth_beliefs(scene)
        moved = dict(truth.cameras)
        vec = truth.cameras[1].mean.copy()
        vec[:3] += [0.3, 0.4, 0.0]
        vec[5] += np.deg2rad(10.0)
        moved[1] = Marginal(vec, truth.cameras[1].cov)
        df = pose_deltas(VariableBeliefs(scene.mode, truth.features, moved), scene)
        row = df.set_index("Camera_ID").loc[1]
        assert row["Position_Delta"] == pytest.approx(0.5)
        assert row["Rotation_Delta_Deg"] == pytest.approx(10.0)

    def test_2d_rotation_delta(self):
        scene = chain_scene_2d()
        truth = truth_beliefs(scene)
        moved = dict(truth.cameras)
        moved[0] = Marginal(truth.cameras[0].mean + [0.0, 0.0, np.deg2rad(-30.0)], truth.cameras[0].cov)
        df = pose_deltas(VariableBeliefs(scene.mode, truth.features, moved), scene)
        assert df.loc[df["Camera_ID"] == 0, "Rotation_Delta_Deg"].item() == pytest.approx(30.0)

    def test_no_ground_truth_gives_empty_frame(self):
        scene = replace(stereo_scene(), ground_truth=False)
        assert pose_deltas(truth_beliefs(stereo_scene()), scene).empty


class TestErrorCell:

    def test_prior_above_posterior(self, tmp_path):
        cell = error_cell(0.8, 0.02)
        assert cell["Stage"].tolist() == ["prior", "posterior"]
        assert cell["Reprojection_Error"].tolist() == [0.8, 0.02]
        path = tmp_path / "cells" / "cell.csv"
        save_error_cell(cell, str(path))
        pd.testing.assert_frame_equal(pd.read_csv(path), cell)


class TestGenerateReport:

    def test_sections_and_file(self, tmp_path):
        scene = stereo_scene()
        summary = {"iterations": 4, "best_iteration": 3, "inflations": 1, "total_sweeps": 40,
                   "unconverged_iterations": 0, "skipped_messages": 0}
        path = tmp_path / "reports" / "report.txt"
        text = generate_report(
            scene, error_cell(0.5, 0.01), deltas=pose_deltas(truth_beliefs(scene), scene),
            trace_summary=summary, config=BpConfig(), cleaning_report={"tracks_removed": 2, "features_dropped": 1},
            output_path=str(path),
        )
        for heading in ("SCENE", "REPROJECTION ERROR", "CAMERA POSE DELTAS", "CONVERGENCE", "SOLVER CONFIGURATION"):
            assert heading in text
        assert "Reduction : 50.0x" in text
        assert "Tracks removed on load       : 2" in text
        assert path.read_text() == text

    def test_minimal_report(self):
        text = generate_report(chain_scene_2d(), error_cell(0.5, 0.0))
        assert "Reduction" not in text
        assert "CONVERGENCE" not in text
        assert text.rstrip().endswith("=" * 70)
