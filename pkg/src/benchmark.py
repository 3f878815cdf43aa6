"""
Benchmark Sweeps
Runs (cameras, features, σ) × prior-noise grids over several seeds and
tabulates mean prior and posterior reprojection error per cell.
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
import logging
import os

import numpy as np
import pandas as pd

from src.errors import ConfigError, SamError
from src.geometry import WorldMode
from src.graph import build_cluster_graph, make_clusters
from src.propagation import solve
from src.scenes import NoiseSpec, reprojection_error, synthetic_scene

logger = logging.getLogger(__name__)

# (cameras, features, σ) rows and (angle °, position) prior-noise columns of the full grid
REFERENCE_SCENES = [
    (5, 50, 0.0001),
    (5, 100, 0.0007),
    (7, 60, 0.0004),
    (10, 100, 0.0012),
    (10, 200, 0.0020),
    (20, 200, 0.0030),
    (30, 500, 0.0040),
]
REFERENCE_NOISE = [(5.0, 0.5), (10.0, 1.0), (20.0, 4.0)]
SMOKE_SCENES = [(5, 20, 0.0001)]
SMOKE_NOISE = [(5.0, 0.5)]

DEFAULT_SEEDS = 5
WORKERS_ENV = "SAMBP_WORKERS"

COLUMNS = [
    "Cams", "Feats", "Sigma", "Angle_Std", "Position_Std", "Seeds", "Failed",
    "Prior_Error", "Posterior_Error", "Reduction", "Failures",
]


@dataclass(frozen=True)
class BenchCell:
    n_cams: int
    n_feats: int
    sigma: float
    angle_std: float
    position_std: float


def grid(scenes, noise):
    """Row-major cells: every scene row crossed with every noise column."""
    return [BenchCell(c, f, s, a, p) for c, f, s in scenes for a, p in noise]


def named_grid(name):
    grids = {"full": (REFERENCE_SCENES, REFERENCE_NOISE), "smoke": (SMOKE_SCENES, SMOKE_NOISE)}
    if name not in grids:
        raise ConfigError(f"unknown benchmark grid {name!r}; choose from {sorted(grids)}")
    return grid(*grids[name])


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(workers, 1)


def run_seed(cell, seed, config, corrupt_pixels=False):
    """One synthetic scene: returns (prior error, posterior error)."""
    noise = NoiseSpec(
        angle_std=cell.angle_std, position_std=cell.position_std, feature_std=cell.position_std,
        pixel_std=cell.sigma if corrupt_pixels else 0.0,
    )
    scene = synthetic_scene(WorldMode.THREE_D, cell.n_cams, cell.n_feats, noise, seed=seed, sigma_obs=cell.sigma)
    graph = build_cluster_graph(make_clusters(scene.tracks, scene.mode), scene.mode)
    estimate = solve(graph, scene.priors, config, scene.calibrations())
    return reprojection_error(scene.priors, scene), reprojection_error(estimate, scene)


def run_cell(cell, seeds, config, corrupt_pixels=False):
    """Mean errors over seeds; failing seeds are recorded, not raised."""
    priors, posteriors, failures = [], [], []
    for seed in seeds:
        try:
            prior, posterior = run_seed(cell, seed, config, corrupt_pixels)
        except (SamError, np.linalg.LinAlgError) as err:
            logger.warning("Cell %s seed %d failed: %s", cell, seed, err)
            failures.append(f"seed {seed}: {type(err).__name__}")
            continue
        priors.append(prior)
        posteriors.append(posterior)

    prior_mean = float(np.mean(priors)) if priors else float("nan")
    posterior_mean = float(np.mean(posteriors)) if posteriors else float("nan")
    return {
        "Cams": cell.n_cams,
        "Feats": cell.n_feats,
        "Sigma": cell.sigma,
        "Angle_Std": cell.angle_std,
        "Position_Std": cell.position_std,
        "Seeds": len(priors),
        "Failed": len(failures),
        "Prior_Error": prior_mean,
        "Posterior_Error": posterior_mean,
        "Reduction": prior_mean / posterior_mean if posterior_mean > 0 else float("nan"),
        "Failures": "; ".join(failures),
    }


def run_grid(cells, seeds, config, workers=None, corrupt_pixels=False, progress=None):
    """Run every cell; rows come back in grid order whatever the completion order."""
    workers = default_workers() if workers is None else max(int(workers), 1)
    seeds = list(seeds)
    rows = [None] * len(cells)
    logger.info("Benchmark: %d cells x %d seeds on %d worker(s)", len(cells), len(seeds), workers)

    if workers == 1:
        for k, cell in enumerate(cells):
            rows[k] = run_cell(cell, seeds, config, corrupt_pixels)
            if progress is not None:
                progress(cell)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, cell, seeds, config, corrupt_pixels): k for k, cell in enumerate(cells)}
            for future in as_completed(futures):
                k = futures[future]
                rows[k] = future.result()
                if progress is not None:
                    progress(cells[k])

    return pd.DataFrame(rows, columns=COLUMNS)


def save_table(df, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False)
    logger.info("Wrote benchmark table (%d rows) to %s", len(df), path)
