"""Region-occupancy metrics over sample batches and the ablation-style report."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from .analytic import SceneSpec
from .engine import Trajectory
from .errors import InvalidArgumentError

LOGGER = logging.getLogger(__name__)

ABLATION_LABELS = ("SC-only", "PG-fixed-3", "PG-fixed-5", "PG-fixed-7", "PG-fixed-10",
                   "PG-dynamic")


def default_radius(scene: SceneSpec) -> float:
    # 3 sigma of the layout spread covers ~99.7% of a region's intended mass.
    return 3.0 * scene.layout_stdev


def assign_regions(samples: np.ndarray, centroids: np.ndarray, r: float) -> np.ndarray:
    """Nearest-centroid assignment within radius r; -1 marks unassigned.

    Exact distance ties go to the lowest centroid index (argmin behavior).
    """
    if not r > 0:
        raise InvalidArgumentError(f"radius must be positive, got {r}")
    centroids = np.asarray(centroids, dtype=float)
    if centroids.ndim != 2 or centroids.shape[0] == 0:
        raise InvalidArgumentError("centroids must be a non-empty list of points")
    if len(set(map(tuple, centroids))) != len(centroids):
        raise InvalidArgumentError("centroids must be pairwise distinct")
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return np.empty(0, dtype=int)
    dists = np.sqrt(np.sum((samples[:, None, :] - centroids[None, :, :]) ** 2, axis=-1))
    nearest = dists.argmin(axis=1)
    within = dists[np.arange(len(samples)), nearest] <= r
    return np.where(within, nearest, -1)


def separation_score(samples: np.ndarray, centroids: np.ndarray, r: float) -> float:
    """Fraction of samples within radius r of exactly one centroid."""
    centroids = np.asarray(centroids, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return 0.0
    dists = np.sqrt(np.sum((samples[:, None, :] - centroids[None, :, :]) ** 2, axis=-1))
    return float(np.mean((dists <= r).sum(axis=1) == 1))


@dataclass(frozen=True)
class ReportRow:
    label: str
    n: int
    occupancy: tuple[float, ...]
    existence: float | None
    separation: float | None
    graft_mean: float | None
    graft_min: int | None
    graft_max: int | None


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    n_regions: int
    r: float

    def csv_columns(self) -> list[str]:
        occ = [f"occupancy_{j + 1}" for j in range(self.n_regions)]
        return ["label", "n", *occ, "existence", "separation",
                "graft_mean", "graft_min", "graft_max"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_columns())
        for row in self.rows:
            occ = [_cell(v) for v in row.occupancy] or [""] * self.n_regions
            if len(occ) < self.n_regions:
                occ += [""] * (self.n_regions - len(occ))
            writer.writerow([row.label, row.n, *occ, _cell(row.existence),
                             _cell(row.separation), _cell(row.graft_mean),
                             _cell(row.graft_min), _cell(row.graft_max)])
        return buf.getvalue()

    def to_json(self) -> str:
        # Same printed numbers as the CSV: floats round-trip through repr in both.
        payload = {
            "r": self.r,
            "n_regions": self.n_regions,
            "rows": [{
                "label": row.label,
                "n": row.n,
                "occupancy": list(row.occupancy),
                "existence": row.existence,
                "separation": row.separation,
                "graft_mean": row.graft_mean,
                "graft_min": row.graft_min,
                "graft_max": row.graft_max,
            } for row in self.rows],
        }
        return json.dumps(payload, indent=2) + "\n"

    def row(self, label: str) -> ReportRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)


def _cell(value) -> str:
    return "" if value is None else str(value)


def _row_from_batch(label: str, batch: list[Trajectory], centroids: np.ndarray,
                    r: float) -> ReportRow:
    k = len(centroids)
    if not batch:
        return ReportRow(label=label, n=0, occupancy=(), existence=None, separation=None,
                         graft_mean=None, graft_min=None, graft_max=None)
    terminals = np.stack([traj.terminal for traj in batch])
    assignment = assign_regions(terminals, centroids, r)
    counts = np.bincount(assignment[assignment >= 0], minlength=k)
    occupancy = tuple(float(c) / len(batch) for c in counts)
    existence = float(np.mean(counts > 0))
    separation = separation_score(terminals, centroids, r)
    grafts = [traj.graft_step for traj in batch if traj.graft_step is not None]
    return ReportRow(
        label=label, n=len(batch), occupancy=occupancy, existence=existence,
        separation=separation,
        graft_mean=float(np.mean(grafts)) if grafts else None,
        graft_min=int(min(grafts)) if grafts else None,
        graft_max=int(max(grafts)) if grafts else None,
    )


def compare_runs(runs: list[tuple[str, list[Trajectory]]], scene: SceneSpec,
                 r: float | None = None) -> EvalReport:
    """One report row per labeled trajectory batch, all over the same scene."""
    r = default_radius(scene) if r is None else r
    centroids = np.asarray(list(scene.region_centroids.values()), dtype=float)
    rows = tuple(_row_from_batch(label, batch, centroids, r) for label, batch in runs)
    return EvalReport(rows=rows, n_regions=len(centroids), r=r)
