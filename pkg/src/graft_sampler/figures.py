"""Report figures rendered to files next to the delimited outputs."""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle

from .analytic import SceneSpec
from .detector import SimilarityTrace
from .engine import Trajectory
from .evaluate import EvalReport, default_radius

LOGGER = logging.getLogger(__name__)

_SAVE_KWARGS = {"metadata": {"Software": None}}  # keep renders reproducible

LAYOUT_COLOR = "#4878a8"
TARGET_COLOR = "#d9772b"


def _draw_scene(ax, scene: SceneSpec, r: float) -> None:
    for phrase, point in scene.region_centroids.items():
        ax.add_patch(Circle(point, r, fill=False, color="gray", linestyle="--", linewidth=1))
        ax.annotate(phrase or "(center)", point, textcoords="offset points",
                    xytext=(0, 6), ha="center", fontsize=7, color="gray")
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.2)


def trajectory_figure(traj: Trajectory, scene: SceneSpec, path: str | Path,
                      r: float | None = None) -> Path:
    """2-D path split by conditioning phase, plus the similarity trace.

    Higher-dimensional states are projected onto their first two coordinates.
    """
    r = default_radius(scene) if r is None else r
    states = np.stack([s.data for s in traj.states])
    if states.shape[1] == 1:
        states = np.column_stack([states[:, 0], np.zeros(len(states))])
    graft = traj.graft_step if traj.graft_step is not None else len(states) - 1

    fig, (ax_path, ax_trace) = plt.subplots(1, 2, figsize=(9, 4.2))
    _draw_scene(ax_path, scene, r)
    ax_path.plot(states[: graft + 1, 0], states[: graft + 1, 1], "-o", markersize=2,
                 color=LAYOUT_COLOR, label="layout phase")
    ax_path.plot(states[graft:, 0], states[graft:, 1], "-o", markersize=2,
                 color=TARGET_COLOR, label="target phase")
    ax_path.scatter(states[-1, 0], states[-1, 1], marker="*", s=120, color="black",
                    zorder=5, label="terminal")
    ax_path.set_title("trajectory")
    ax_path.legend(fontsize=7)

    if traj.similarity_trace.entries:
        steps, scores = zip(*traj.similarity_trace.entries)
        ax_trace.plot(steps, scores, "-o", markersize=3, color=LAYOUT_COLOR)
    if traj.graft_step is not None:
        ax_trace.axvline(traj.graft_step, color=TARGET_COLOR, linestyle="--",
                         label=f"graft at {traj.graft_step}")
        ax_trace.legend(fontsize=7)
    ax_trace.set_xlabel("step")
    ax_trace.set_ylabel("layout similarity")
    ax_trace.set_title("similarity trace")

    return _save(fig, path)


def trace_figure(trace: SimilarityTrace, graft_step: int | None,
                 path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if trace.entries:
        steps, scores = zip(*trace.entries)
        ax.plot(steps, scores, "-o", markersize=3, color=LAYOUT_COLOR)
    if graft_step is not None:
        ax.axvline(graft_step, color=TARGET_COLOR, linestyle="--",
                   label=f"graft at {graft_step}")
        ax.legend(fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("score")
    ax.set_title("similarity trace")
    return _save(fig, path)


def report_figure(batches: list[tuple[str, list[Trajectory]]], scene: SceneSpec,
                  report: EvalReport, path: str | Path) -> Path:
    """Terminal-state scatter per report row, annotated with its separation score."""
    n = len(batches)
    cols = min(3, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.2 * rows), squeeze=False)
    for idx, (label, batch) in enumerate(batches):
        ax = axes[idx // cols][idx % cols]
        _draw_scene(ax, scene, report.r)
        if batch:
            terminals = np.stack([traj.terminal for traj in batch])
            ax.scatter(terminals[:, 0], terminals[:, 1], s=4, alpha=0.4,
                       color=TARGET_COLOR)
        sep = report.row(label).separation
        ax.set_title(f"{label} (separation {sep:.3f})" if sep is not None else label,
                     fontsize=9)
    for idx in range(n, rows * cols):
        axes[idx // cols][idx % cols].axis("off")
    return _save(fig, path)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path
