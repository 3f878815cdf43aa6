#!/usr/bin/env python3
"""
Structure-and-Motion by Loopy Belief Propagation
================================================
Command-line front end: generates synthetic scenes, solves them with
sigma-point belief propagation over a cluster graph, evaluates, benchmarks,
exports and plots the results.

Usage:
    python main.py generate --mode 3d --cams 5 --feats 50 --seed 1 --out output/scenes/s1.json
    python main.py solve output/scenes/s1.json --out output/results/s1.json
    python main.py eval output/scenes/s1.json output/results/s1.json
    python main.py bench --grid full --seeds 5 --out output/bench/full.csv
    python main.py export output/results/s1.json --format pointcloud --out output/s1.ply
    python main.py plot --scene output/scenes/s1.json --result output/results/s1.json

Environment:
    SAMBP_WORKERS   default number of worker processes for `bench`
"""

import argparse
import logging
import os
import sys
import time
import warnings

warnings.filterwarnings("ignore", category=FutureWarning)

import pandas as pd
from tqdm import tqdm

# Add project root to path
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

from src import benchmark, dashboard, export, report_generator, scene_io, trace_analysis
from src.errors import SamError
from src.geometry import WorldMode
from src.graph import build_cluster_graph, make_clusters, validate_rip
from src.propagation import (
    DEFAULT_DAMPING, DEFAULT_INFLATION, DEFAULT_INNER_TOL, DEFAULT_MAX_OUTER_ITERS, SCHEDULE_VARIABLES, SCHEDULES,
    BpConfig, solve,
)
from src.scenes import (
    DEFAULT_DROP_PROB, DEFAULT_SIGMA_OBS, NoiseSpec, perturb_priors, reprojection_error, synthetic_scene,
)
from src.unscented import DEFAULT_W0

OUTPUT_DIR = os.path.join(PROJECT_ROOT, "output")

# Per-mode defaults: (cams, feats, angle noise °, position noise, wide feature prior std)
MODE_DEFAULTS = {
    WorldMode.THREE_D: (5, 50, 5.0, 0.5, None),
    WorldMode.TWO_D: (7, 15, 10.0, 1.0, 2.0),
}

BAR_FORMAT = "  {l_bar}{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}]"


# ── Output helpers ─────────────────────────────────────────────────

def _banner(title):
    print()
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)
    print()


def _results_header():
    print()
    print("-" * 60)
    print("  RESULTS")
    print("-" * 60)


def _footer(title):
    print()
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)
    print()


def _default_path(*parts):
    return os.path.join(OUTPUT_DIR, *parts)


# ── Argument parsing ───────────────────────────────────────────────

def _add_noise_flags(p):
    p.add_argument("--angle-noise", type=float, default=None,
                   help="std of prior angle noise in degrees (3d: 5, 2d: 10)")
    p.add_argument("--pos-noise", type=float, default=None,
                   help="std of prior camera-position noise (3d: 0.5, 2d: 1.0)")
    p.add_argument("--feat-noise", type=float, default=None,
                   help="std of prior feature noise (defaults to --pos-noise)")
    p.add_argument("--feature-prior-std", type=float, default=None,
                   help="wide feature priors centred on the origin with this std (2d default: 2.0)")
    p.add_argument("--pixel-noise", type=float, default=0.0,
                   help="std of noise added to the observed projections (default 0)")


def _add_config_flags(p):
    p.add_argument("--w0", type=float, default=DEFAULT_W0, help="centre weight of the standard scheme")
    p.add_argument("--scheme", choices=["symmetric", "standard"], default="standard",
                   help="sigma point scheme")
    p.add_argument("--damping", type=float, default=DEFAULT_DAMPING, help="message damping in [0, 1)")
    p.add_argument("--inflation", type=float, default=DEFAULT_INFLATION,
                   help="covariance inflation factor on stalls")
    p.add_argument("--max-outer", type=int, default=DEFAULT_MAX_OUTER_ITERS, help="max outer iterations")
    p.add_argument("--inner-tol", type=float, default=DEFAULT_INNER_TOL, help="inner BP convergence tolerance")
    p.add_argument("--sigma-obs", type=float, default=None,
                   help="observation noise std overriding the per-track value")
    p.add_argument("--no-prior-split", action="store_true",
                   help="give every cluster the full priors instead of sharing them")
    p.add_argument("--schedule", choices=list(SCHEDULES), default=SCHEDULE_VARIABLES,
                   help="inner BP order: stacked per-variable stars or round-robin over edges")


def build_parser():
    parser = argparse.ArgumentParser(
        description="Structure-and-motion by loopy Gaussian belief propagation",
        epilog="Environment: SAMBP_WORKERS sets the default worker count for `bench`.",
    )
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="library log level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic scene with perturbed priors")
    p.add_argument("--mode", choices=["2d", "3d"], default="3d")
    p.add_argument("--cams", type=int, default=None, help="number of cameras (3d: 5, 2d: 7)")
    p.add_argument("--feats", type=int, default=None, help="number of features (3d: 50, 2d: 15)")
    p.add_argument("--pixel-sigma", type=float, default=DEFAULT_SIGMA_OBS,
                   help="observation noise std recorded with every track")
    p.add_argument("--drop-prob", type=float, default=DEFAULT_DROP_PROB,
                   help="2d only: probability of dropping a projection")
    _add_noise_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="scene file path")

    p = sub.add_parser("solve", help="solve a scene file")
    p.add_argument("scene")
    _add_config_flags(p)
    p.add_argument("--priors-from-truth", action="store_true",
                   help="perturb ground truth into priors instead of using the file's priors")
    _add_noise_flags(p)
    p.add_argument("--drop-underconstrained", action="store_true",
                   help="drop features seen by fewer than two cameras instead of failing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="result file path")
    p.add_argument("--report", default=None, help="text report path")

    p = sub.add_parser("eval", help="compare prior and posterior reprojection error")
    p.add_argument("scene")
    p.add_argument("result")
    p.add_argument("--out", default=None, help="CSV path for the prior/posterior cell")
    p.add_argument("--report", default=None, help="text report path")

    p = sub.add_parser("bench", help="run a benchmark grid")
    p.add_argument("--grid", choices=["full", "smoke"], default="full",
                   help="full: 7 scene sizes x 3 prior-noise levels; smoke: one small cell")
    p.add_argument("--cams", type=int, default=None, help="single-cell grid: cameras")
    p.add_argument("--feats", type=int, default=None, help="single-cell grid: features")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA_OBS, help="single-cell grid: σ")
    p.add_argument("--angle-noise", type=float, default=5.0, help="single-cell grid: angle noise (deg)")
    p.add_argument("--pos-noise", type=float, default=0.5, help="single-cell grid: position noise")
    p.add_argument("--seeds", type=int, default=benchmark.DEFAULT_SEEDS, help="seeds 0..N-1 per cell")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default $SAMBP_WORKERS or 1)")
    p.add_argument("--corrupt-pixels", action="store_true", help="add σ noise to the projections")
    _add_config_flags(p)
    p.add_argument("--out", default=None, help="CSV path")

    p = sub.add_parser("export", help="export a result file")
    p.add_argument("result")
    p.add_argument("--format", choices=list(export.EXPORT_FORMATS), default="pointcloud")
    p.add_argument("--out", default=None)

    p = sub.add_parser("plot", help="save PNG plots of a solved scene or a benchmark table")
    p.add_argument("--scene", default=None)
    p.add_argument("--result", default=None)
    p.add_argument("--bench-csv", default=None)
    p.add_argument("--out-dir", default=_default_path("plots"))

    return parser


def _config_from_args(args):
    return BpConfig(
        inner_tol=args.inner_tol,
        max_outer_iters=args.max_outer,
        inflation=args.inflation,
        damping=args.damping,
        sigma_obs=args.sigma_obs,
        scheme=args.scheme,
        w0=args.w0,
        seed=getattr(args, "seed", 0),
        prior_split=not args.no_prior_split,
        schedule=args.schedule,
    )


def _noise_from_args(args, mode):
    _, _, angle, pos, wide = MODE_DEFAULTS[mode]
    angle = angle if args.angle_noise is None else args.angle_noise
    pos = pos if args.pos_noise is None else args.pos_noise
    return NoiseSpec(
        angle_std=angle,
        position_std=pos,
        feature_std=pos if args.feat_noise is None else args.feat_noise,
        pixel_std=args.pixel_noise,
        visibility_drop_prob=getattr(args, "drop_prob", 0.0) if mode is WorldMode.TWO_D else 0.0,
        feature_prior_std=wide if args.feature_prior_std is None else args.feature_prior_std,
    )


# ── Commands ───────────────────────────────────────────────────────

def cmd_generate(args):
    mode = WorldMode.parse(args.mode)
    cams, feats, *_ = MODE_DEFAULTS[mode]
    n_cams = cams if args.cams is None else args.cams
    n_feats = feats if args.feats is None else args.feats
    noise = _noise_from_args(args, mode)
    out = args.out or _default_path("scenes", f"scene_{mode.value}_seed{args.seed}.json")

    scene = synthetic_scene(mode, n_cams, n_feats, noise, seed=args.seed, sigma_obs=args.pixel_sigma)
    scene_io.save_scene(scene, out)

    _banner("GENERATE SCENE")
    print(f"  Mode           : {mode.value}")
    print(f"  Cameras        : {n_cams}")
    print(f"  Features       : {n_feats}")
    print(f"  Tracks         : {len(scene.tracks)}")
    print(f"  Prior error    : {reprojection_error(scene.priors, scene):.4f}")
    print(f"  Scene file     : {out}")
    _footer("GENERATION COMPLETE")
    return 0


def cmd_solve(args):
    config = _config_from_args(args)
    scene, cleaning = scene_io.load_scene(args.scene, args.drop_underconstrained)
    if args.priors_from_truth:
        priors = perturb_priors(scene, _noise_from_args(args, scene.mode), seed=args.seed)
    elif scene.priors is not None:
        priors = scene.priors
    else:
        raise SamError(f"{args.scene} has no priors; pass --priors-from-truth to derive them")

    _banner("STRUCTURE-AND-MOTION SOLVE")
    t_start = time.time()
    graph = build_cluster_graph(make_clusters(scene.tracks, scene.mode), scene.mode)
    rip = validate_rip(graph)
    if not rip.passed:
        raise SamError(f"cluster graph violates running intersection: {next(iter(rip.failures.values()))}")

    progress = tqdm(total=config.max_outer_iters, bar_format=BAR_FORMAT, ncols=70, colour="green")
    progress.set_description(f"  {'Outer iterations':<20}")

    def on_iteration(record):
        progress.update(1)
        tqdm.write(f"  iter {record.iteration:>3}  error {record.error:.6e}  sweeps {record.inner_sweeps:>3}"
                   f"{'  inflated' if record.inflated else ''}")

    try:
        estimate = solve(graph, priors, config, scene.calibrations(), progress=on_iteration)
    finally:
        progress.close()
    elapsed = time.time() - t_start

    out = args.out or _default_path("results", os.path.splitext(os.path.basename(args.scene))[0] + "_result.json")
    scene_io.save_result(estimate, out, config=config, seed=args.seed)
    trace_df, summary = trace_analysis.analyze(estimate.trace)

    prior_error = reprojection_error(priors, scene)
    posterior_error = reprojection_error(estimate, scene)
    cell = report_generator.error_cell(prior_error, posterior_error)
    if args.report:
        deltas = report_generator.pose_deltas(estimate, scene)
        report_generator.generate_report(scene, cell, deltas, summary, config, cleaning, args.report)

    _results_header()
    print(f"\n  Clusters       : {len(graph.clusters)}")
    print(f"  Edges          : {graph.n_edges}")
    print(f"  Iterations     : {summary['iterations']} (accepted {summary['best_iteration']})")
    print(f"  Prior error    : {prior_error:.6f}")
    print(f"  Posterior error: {posterior_error:.6f}")
    print(f"\n  Time Elapsed   : {elapsed:.1f}s")
    print(f"  Result         : {out}")
    if args.report:
        print(f"  Report         : {args.report}")
    _footer("SOLVE COMPLETE")
    return 0


def cmd_eval(args):
    scene, cleaning = scene_io.load_scene(args.scene)
    estimate = scene_io.load_result(args.result)
    scene_io.check_result_matches(estimate, scene)

    prior_error = reprojection_error(scene.priors, scene) if scene.priors is not None else estimate.prior_error
    posterior_error = reprojection_error(estimate, scene)
    cell = report_generator.error_cell(prior_error, posterior_error)
    deltas = report_generator.pose_deltas(estimate, scene)
    _, summary = trace_analysis.analyze(estimate.trace)

    if args.out:
        report_generator.save_error_cell(cell, args.out)
    text = report_generator.generate_report(scene, cell, deltas, summary if estimate.trace else None,
                                            cleaning_report=cleaning, output_path=args.report)
    print(text)
    return 0


def cmd_bench(args):
    config = _config_from_args(args)
    if args.cams is not None or args.feats is not None:
        if args.cams is None or args.feats is None:
            raise SamError("a single-cell grid needs both --cams and --feats")
        cells = benchmark.grid([(args.cams, args.feats, args.sigma)], [(args.angle_noise, args.pos_noise)])
    else:
        cells = benchmark.named_grid(args.grid)
    seeds = range(args.seeds)
    out = args.out or _default_path("bench", f"{args.grid}.csv")

    _banner("BENCHMARK")
    t_start = time.time()
    progress = tqdm(total=len(cells), bar_format=BAR_FORMAT, ncols=70, colour="green")
    progress.set_description(f"  {'Cells':<20}")
    try:
        table = benchmark.run_grid(cells, seeds, config, workers=args.workers,
                                   corrupt_pixels=args.corrupt_pixels, progress=lambda cell: progress.update(1))
    finally:
        progress.close()
    benchmark.save_table(table, out)
    elapsed = time.time() - t_start

    _results_header()
    print(f"\n  {'Cams':>5} {'Feats':>6} {'σ':>8} {'Noise':>12} {'Prior':>9} {'Posterior':>10} {'Failed':>7}")
    for _, row in table.iterrows():
        noise = f"{row['Angle_Std']:g}°/{row['Position_Std']:g}"
        print(f"  {row['Cams']:>5} {row['Feats']:>6} {row['Sigma']:>8g} {noise:>12} "
              f"{row['Prior_Error']:>9.4f} {row['Posterior_Error']:>10.4f} {row['Failed']:>7}")
    print(f"\n  Time Elapsed   : {elapsed:.1f}s")
    print(f"  Table          : {out}")
    _footer("BENCHMARK COMPLETE")
    return 0


def cmd_export(args):
    estimate = scene_io.load_result(args.result)
    suffix = ".ply" if args.format == "pointcloud" else "_trace.csv"
    out = args.out or _default_path("exports", os.path.splitext(os.path.basename(args.result))[0] + suffix)
    export.export(estimate, args.format, out)
    print(f"Exported {args.format} → {out}")
    return 0


def cmd_plot(args):
    saved = []
    if args.result:
        estimate = scene_io.load_result(args.result)
        trace_df, _ = trace_analysis.analyze(estimate.trace)
        if args.scene:
            scene, _ = scene_io.load_scene(args.scene)
            saved.extend(dashboard.generate_all(scene, estimate, trace_df, args.out_dir))
        else:
            saved.append(dashboard.plot_trace(trace_df, args.out_dir))
    if args.bench_csv:
        saved.append(dashboard.plot_bench_heatmap(pd.read_csv(args.bench_csv), args.out_dir))
    if not saved:
        raise SamError("nothing to plot: pass --result (optionally with --scene) or --bench-csv")
    for path in saved:
        print(f"  Saved plot → {path}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "export": cmd_export,
    "plot": cmd_plot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SamError as err:
        print(f"ERROR: {err}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
