"""Tests for the per-iteration convergence trace analysis."""

import numpy as np
import pytest

from src.propagation import IterationRecord
from src.trace_analysis import analyze, best_iteration, best_so_far, relative_improvement, rolling_error, trace_frame


def _trace(errors, inflated=()):
    return [
        IterationRecord(k + 1, e, 10 + k, (k + 1) in inflated, k != 2, 1e-7, k % 2)
        for k, e in enumerate(errors)
    ]


class TestTraceFrame:

    def test_columns_and_rows(self):
        df = trace_frame(_trace([1.0, 0.5]))
        assert list(df.columns) == [
            "Iteration", "Error", "Inner_Sweeps", "Inflated", "Converged", "Final_Delta", "Skipped_Messages",
        ]
        assert df["Iteration"].tolist() == [1, 2]

    def test_best_so_far_is_non_increasing(self):
        df = trace_frame(_trace([1.0, 0.4, 0.6, 0.3, 0.35]))
        assert best_so_far(df).tolist() == [1.0, 0.4, 0.4, 0.3, 0.3]

    def test_relative_improvement(self):
        df = trace_frame(_trace([1.0, 0.5, 0.0, 0.2]))
        rel = relative_improvement(df)
        assert np.isnan(rel.iloc[0])
        assert rel.iloc[1] == pytest.approx(0.5)
        assert rel.iloc[2] == pytest.approx(1.0)
        assert np.isnan(rel.iloc[3])

    def test_rolling_mean(self):
        df = trace_frame(_trace([3.0, 1.0, 2.0, 6.0]))
        assert rolling_error(df).tolist() == pytest.approx([3.0, 2.0, 2.0, 3.0])

    def test_best_iteration_takes_first_minimum(self):
        assert best_iteration(trace_frame(_trace([0.5, 0.2, 0.2, 0.9]))) == 2
        assert best_iteration(trace_frame([])) == 0


class TestAnalyze:

    def test_summary(self):
        df, summary = analyze(_trace([1.0, 0.4, 0.39, 0.395, 0.1], inflated=(4,)))
        assert summary["iterations"] == 5
        assert summary["best_iteration"] == 5
        assert summary["best_error"] == pytest.approx(0.1)
        assert summary["first_error"] == pytest.approx(1.0)
        assert summary["inflations"] == 1
        assert summary["total_sweeps"] == 10 + 11 + 12 + 13 + 14
        assert summary["unconverged_iterations"] == 1
        assert summary["skipped_messages"] == 2
        assert df["Accepted"].tolist() == [False, False, False, False, True]

    def test_empty_trace(self):
        df, summary = analyze([])
        assert df.empty
        assert summary["iterations"] == 0
        assert summary["best_iteration"] == 0
        assert np.isnan(summary["best_error"])
