"""
Dashboard & Visualization Module
Saves PNG plots of scenes (ground truth vs estimate), error traces and
benchmark tables.
"""

import logging
import os

import matplotlib
matplotlib.use("Agg")  # non-interactive backend
import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

from src.geometry import WorldMode, rotation_from_euler

logger = logging.getLogger(__name__)

# --- Style setup ---
sns.set_theme(style="whitegrid", palette="muted", font_scale=1.1)
COLORS = sns.color_palette("Set2", 10)
TRUTH_COLOR = "lightgray"
FIG_DPI = 150
AXIS_LENGTH = 1.0   # drawn length of a camera's viewing direction


def _save(fig, output_dir, name):
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, f"{name}.png")
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight", facecolor="white")
    plt.close(fig)
    logger.info("Saved plot to %s", path)
    return path


def _viewing_direction(pose, mode):
    # third (last) row of R is the camera's depth axis in world coordinates
    return rotation_from_euler(pose.angles, mode)[-1]


def plot_scene(scene, estimate, output_dir, name="scene", title=None):
    """Ground truth in light grey, estimate coloured per camera, anchored camera starred."""
    mode = scene.mode
    palette = sns.color_palette("husl", max(len(estimate.cameras), 1))
    poses = estimate.poses()
    points = np.array([estimate.features[i].mean for i in sorted(estimate.features)]).reshape(-1, mode.world_dim)
    anchor = min(poses) if poses else None

    if mode is WorldMode.TWO_D:
        fig, ax = plt.subplots(figsize=(8, 8))
        if scene.ground_truth:
            truth = np.array([scene.features[i] for i in sorted(scene.features)]).reshape(-1, 2)
            ax.scatter(truth[:, 0], truth[:, 1], color=TRUTH_COLOR, s=40, label="ground truth")
            for cam in scene.cameras.values():
                d = _viewing_direction(cam.pose, mode)
                ax.plot(*cam.pose.center, "s", color=TRUTH_COLOR)
                ax.arrow(*cam.pose.center, *(AXIS_LENGTH * d), color=TRUTH_COLOR, head_width=0.15)
        ax.scatter(points[:, 0], points[:, 1], color="black", s=15, label="estimated features")
        for k, j in enumerate(sorted(poses)):
            pose = poses[j]
            d = _viewing_direction(pose, mode)
            marker = "*" if j == anchor else "s"
            ax.plot(*pose.center, marker, color=palette[k], markersize=12 if j == anchor else 7)
            ax.arrow(*pose.center, *(AXIS_LENGTH * d), color=palette[k], head_width=0.15)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    else:
        fig = plt.figure(figsize=(9, 8))
        ax = fig.add_subplot(projection="3d")
        if scene.ground_truth:
            truth = np.array([scene.features[i] for i in sorted(scene.features)]).reshape(-1, 3)
            ax.scatter(truth[:, 0], truth[:, 1], truth[:, 2], color=TRUTH_COLOR, s=25, label="ground truth")
            centres = np.array([cam.pose.center for cam in scene.cameras.values()])
            ax.scatter(centres[:, 0], centres[:, 1], centres[:, 2], color=TRUTH_COLOR, marker="s", s=40)
        ax.scatter(points[:, 0], points[:, 1], points[:, 2], color="black", s=8, label="estimated features")
        for k, j in enumerate(sorted(poses)):
            pose = poses[j]
            d = AXIS_LENGTH * _viewing_direction(pose, mode)
            ax.scatter(*pose.center, color=palette[k], marker="*" if j == anchor else "s",
                       s=150 if j == anchor else 40)
            ax.quiver(*pose.center, *d, color=palette[k])
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_zlabel("z")

    ax.set_title(title or "Scene: ground truth vs estimate", fontsize=14, fontweight="bold")
    ax.legend(loc="upper right")
    return _save(fig, output_dir, name)


def plot_trace(trace_df, output_dir, name="error_trace"):
    """Per-iteration error with best-so-far curve; inflated iterations marked."""
    fig, ax = plt.subplots(figsize=(10, 5))
    if not trace_df.empty:
        ax.plot(trace_df["Iteration"], trace_df["Error"], "o-", color=COLORS[0], label="Error")
        ax.plot(trace_df["Iteration"], trace_df["Best_So_Far"], "--", color=COLORS[1], linewidth=2,
                label="Best so far")
        inflated = trace_df[trace_df["Inflated"]]
        if not inflated.empty:
            ax.scatter(inflated["Iteration"], inflated["Error"], marker="^", s=90, color=COLORS[3],
                       zorder=5, label="Inflated")
        accepted = trace_df[trace_df["Accepted"]]
        ax.scatter(accepted["Iteration"], accepted["Error"], marker="*", s=200, color="red",
                   zorder=6, label="Accepted")
        if (trace_df["Error"] > 0).all():
            ax.set_yscale("log")
    ax.set_xlabel("Outer iteration")
    ax.set_ylabel("Mean reprojection error")
    ax.set_title("Reprojection Error Over Outer Iterations", fontsize=14, fontweight="bold")
    ax.legend()
    return _save(fig, output_dir, name)


def plot_bench_heatmap(table, output_dir, name="benchmark_heatmap"):
    """Posterior error per cell: scene rows against noise columns."""
    work = table.copy()
    work["Scene"] = (work["Cams"].astype(str) + " cams / " + work["Feats"].astype(str)
                     + " feats (σ=" + work["Sigma"].map("{:g}".format) + ")")
    work["Noise"] = work["Angle_Std"].map("{:g}°".format) + " / " + work["Position_Std"].map("{:g}".format)
    pivot = work.pivot_table(index="Scene", columns="Noise", values="Posterior_Error", sort=False)
    fig, ax = plt.subplots(figsize=(10, 1 + 0.6 * max(len(pivot), 1)))
    sns.heatmap(pivot, annot=True, fmt=".4f", cmap="YlOrRd", ax=ax,
                linewidths=0.5, cbar_kws={"label": "Posterior reprojection error"})
    ax.set_title("Posterior Error by Scene Size and Prior Noise", fontsize=14, fontweight="bold")
    ax.set_xlabel("Prior noise (angle / position)")
    ax.set_ylabel("")
    return _save(fig, output_dir, name)


def generate_all(scene, estimate, trace_df, output_dir):
    """Scene and trace plots for one solved scene; returns the saved paths."""
    paths = [plot_scene(scene, estimate, output_dir)]
    paths.append(plot_trace(trace_df, output_dir))
    return paths
