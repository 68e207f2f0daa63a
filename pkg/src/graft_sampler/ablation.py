"""Labeled batch runs for the ablation grid: pure-target baseline vs grafted variants."""
from __future__ import annotations

import dataclasses
import logging

from .analytic import AnalyticBackend, LayoutScorer, SceneSpec, unconditional_spec
from .detector import GraftPolicy
from .engine import ConditionTriple, SamplerConfig, Trajectory, run_batch
from .errors import InvalidArgumentError
from .evaluate import ABLATION_LABELS

LOGGER = logging.getLogger(__name__)

FIXED_GRID = (3, 5, 7, 10)


def baseline_run(config: SamplerConfig, conditions: ConditionTriple,
                 scene: SceneSpec, n: int) -> list[Trajectory]:
    """Pure-target transport on the same seeds: no guidance, target from step 0.

    The backend's unconditional field is replaced by the target mixture, so with
    omega = 0 every step integrates the raw target velocity.
    """
    if conditions.target.mixture is None:
        raise InvalidArgumentError("baseline run needs an analytic target mixture")
    backend = AnalyticBackend(uncond=conditions.target.mixture, name="pure-target")
    pure = dataclasses.replace(config, omega=0.0)
    return run_batch(pure, conditions, backend, None, GraftPolicy.fixed(0), n)


def grafted_run(config: SamplerConfig, conditions: ConditionTriple,
                scene: SceneSpec, policy: GraftPolicy, n: int,
                tau: float = 1.0) -> list[Trajectory]:
    """Guided run under the given graft policy on the analytic scene."""
    if conditions.layout.mixture is None:
        raise InvalidArgumentError("grafted run needs an analytic layout mixture")
    backend = AnalyticBackend(uncond=unconditional_spec(scene))
    scorer = None
    if policy.mode == "dynamic":
        scorer = LayoutScorer(conditions.layout.mixture, tau=tau)
    return run_batch(config, conditions, backend, scorer, policy, n)


def run_grid(config: SamplerConfig, conditions: ConditionTriple, scene: SceneSpec,
             policy: GraftPolicy, n: int, tau: float = 1.0,
             labels: tuple[str, ...] = ABLATION_LABELS) -> list[tuple[str, list[Trajectory]]]:
    """Run every requested ablation row on identical seeds."""
    rows: list[tuple[str, list[Trajectory]]] = []
    for label in labels:
        if label == "SC-only":
            batch = baseline_run(config, conditions, scene, n)
        elif label == "PG-dynamic":
            dynamic = dataclasses.replace(policy, mode="dynamic", T=None)
            batch = grafted_run(config, conditions, scene, dynamic, n, tau=tau)
        elif label.startswith("PG-fixed-"):
            step = int(label.removeprefix("PG-fixed-"))
            batch = grafted_run(config, conditions, scene, GraftPolicy.fixed(step), n)
        else:
            raise InvalidArgumentError(f"unknown ablation label {label!r}")
        LOGGER.info("ablation row %s: %d trajectories", label, len(batch))
        rows.append((label, batch))
    return rows
