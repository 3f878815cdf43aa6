"""
Convergence Trace Analysis
Tracks reprojection error over outer iterations: best-so-far curve, relative
improvement, rolling mean and the accepted iterate.
"""

import pandas as pd
import numpy as np

ROLLING_WINDOW = 3


def trace_frame(trace):
    """One row per outer iteration from a list of IterationRecord."""
    columns = ["Iteration", "Error", "Inner_Sweeps", "Inflated", "Converged", "Final_Delta", "Skipped_Messages"]
    rows = [
        (r.iteration, r.error, r.inner_sweeps, r.inflated, r.converged, r.final_delta, r.skipped_messages)
        for r in trace
    ]
    return pd.DataFrame(rows, columns=columns)


def best_so_far(df):
    """Running minimum of the error; non-increasing by construction."""
    return df["Error"].cummin().rename("Best_So_Far")


def relative_improvement(df):
    """(e_{k-1} − e_k) / e_{k-1}; NaN for the first iteration."""
    previous = df["Error"].shift(1)
    rel = (previous - df["Error"]) / previous.replace(0.0, np.nan)
    return rel.rename("Rel_Improvement")


def rolling_error(df, window=ROLLING_WINDOW):
    rolling = df["Error"].rolling(window=window, min_periods=1).mean()
    return rolling.rename(f"Rolling_{window}_Error")


def best_iteration(df):
    """Iteration number of the (first) minimum error, or 0 for an empty trace."""
    if df.empty:
        return 0
    return int(df.loc[df["Error"].idxmin(), "Iteration"])


def analyze(trace):
    """Run all trace analyses; returns the enriched frame and a summary dict."""
    df = trace_frame(trace)
    df["Best_So_Far"] = best_so_far(df)
    df["Rel_Improvement"] = relative_improvement(df)
    df[f"Rolling_{ROLLING_WINDOW}_Error"] = rolling_error(df)
    best = best_iteration(df)
    df["Accepted"] = df["Iteration"] == best

    summary = {
        "iterations": len(df),
        "best_iteration": best,
        "best_error": float(df["Error"].min()) if len(df) else float("nan"),
        "first_error": float(df["Error"].iloc[0]) if len(df) else float("nan"),
        "inflations": int(df["Inflated"].sum()),
        "total_sweeps": int(df["Inner_Sweeps"].sum()),
        "unconverged_iterations": int((~df["Converged"].astype(bool)).sum()),
        "skipped_messages": int(df["Skipped_Messages"].sum()),
    }
    return df, summary
