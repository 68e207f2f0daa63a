"""Trajectory and trace files: JSONL stream, CSV trace, optional float32 dump."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .detector import SimilarityTrace
from .engine import Trajectory
from .errors import InvalidArgumentError

# One JSON record per line, fields in this order:
#   step        int, 0..S (the final record carries the terminal state)
#   condition   "layout" | "target" for integration steps, null on the final record
#   similarity  score computed at that step, else null
#   state       the state vector *before* the step (terminal state on the final record)
RECORD_FIELDS = ("step", "condition", "similarity", "state")


def trajectory_records(traj: Trajectory) -> list[dict]:
    S = traj.config.total_steps
    scores = dict(traj.similarity_trace.entries)
    records = []
    for s in range(S):
        records.append({
            "step": s,
            "condition": traj.condition_at(s),
            "similarity": scores.get(s),
            "state": [float(v) for v in traj.states[s].data],
        })
    records.append({
        "step": S,
        "condition": None,
        "similarity": None,
        "state": [float(v) for v in traj.states[S].data],
    })
    return records


def write_trajectory(traj: Trajectory, path: str | Path,
                     binary_states: bool = False) -> Path | None:
    """Write the line-delimited stream; optionally dump states as little-endian float32.

    Returns the sidecar path when a binary dump was requested.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in trajectory_records(traj):
            fh.write(json.dumps(record) + "\n")
    if not binary_states:
        return None
    sidecar = path.with_suffix(".f32")
    stacked = np.stack([s.data for s in traj.states]).astype("<f4")
    sidecar.write_bytes(stacked.tobytes())
    return sidecar


def read_trajectory(path: str | Path) -> dict:
    """Parse a trajectory stream back into plain arrays (for inspection and tests)."""
    steps, conditions, similarities, states = [], [], [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            steps.append(record["step"])
            conditions.append(record["condition"])
            similarities.append(record["similarity"])
            states.append(record["state"])
    if steps != list(range(len(steps))):
        raise InvalidArgumentError(f"non-contiguous steps in {path}")
    graft = next((s for s, c in zip(steps, conditions) if c == "target"), None)
    return {
        "states": np.asarray(states, dtype=float),
        "conditions": conditions,
        "similarities": similarities,
        "graft_step": graft,
    }


def write_trace_csv(trace: SimilarityTrace, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "score"])
        for step, score in trace.entries:
            writer.writerow([step, score])


def read_trace_csv(path: str | Path) -> SimilarityTrace:
    entries = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["step", "score"]:
            raise InvalidArgumentError(
                f"trace CSV must have the header 'step,score', got {reader.fieldnames}"
            )
        for row in reader:
            entries.append((int(row["step"]), float(row["score"])))
    return SimilarityTrace(tuple(entries))


def write_summary(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
