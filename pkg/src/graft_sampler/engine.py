"""Probability-flow ODE sampler with a piecewise conditioning schedule and guidance."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .analytic import MixtureSpec
from .detector import Decision, GraftPolicy, SimilarityTrace, update, window_bounds
from .errors import (InvalidArgumentError, NumericFailureError, SamplerAbort)

LOGGER = logging.getLogger(__name__)

DEFAULT_STEPS = 100
DEFAULT_GUIDANCE = 12.0

UNCOND_ID = "uncond"


@dataclass(frozen=True)
class Condition:
    """One conditioning signal: text for remote backends, mixture for the analytic one."""

    id: str
    text: str = ""
    mixture: MixtureSpec | None = None


@dataclass(frozen=True)
class ConditionTriple:
    """The layout/target/negative conditions a grafted run switches between."""

    layout: Condition
    target: Condition
    negative: Condition
    bundle_id: str = ""

    def __post_init__(self):
        ids = {self.layout.id, self.target.id, self.negative.id, UNCOND_ID}
        if len(ids) != 4:
            raise InvalidArgumentError("condition ids must be distinct and not 'uncond'")


@dataclass(frozen=True)
class State:
    """Dense state vector plus its step index; entries always finite."""

    data: np.ndarray
    step: int

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=float))
        if self.data.ndim != 1 or self.data.shape[0] == 0:
            raise InvalidArgumentError("state data must be a non-empty vector")
        if not np.all(np.isfinite(self.data)):
            raise NumericFailureError("state contains non-finite entries", step=self.step)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class SamplerConfig:
    total_steps: int = DEFAULT_STEPS
    omega: float = DEFAULT_GUIDANCE
    dim: int = 2
    seed: int = 0
    apply_guidance_during_layout: bool = True
    fallback_on_scorer_error: bool = False

    def __post_init__(self):
        if self.total_steps < 1:
            raise InvalidArgumentError(f"total_steps must be >= 1, got {self.total_steps}")
        if not np.isfinite(self.omega) or self.omega < 0:
            raise InvalidArgumentError(f"omega must be finite and >= 0, got {self.omega}")
        if self.dim < 1:
            raise InvalidArgumentError(f"dim must be >= 1, got {self.dim}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError(f"seed must fit an unsigned 64-bit integer, got {self.seed}")

    @property
    def gamma(self) -> float:
        # The step size is always derived, never stored.
        return 1.0 / self.total_steps


@dataclass(frozen=True)
class Trajectory:
    """Full record of one run: every state, the similarity trace, the graft step."""

    states: tuple[State, ...]
    similarity_trace: SimilarityTrace
    graft_step: int | None
    config: SamplerConfig
    bundle_id: str = ""

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1].data

    def condition_at(self, step: int) -> str:
        """Condition role in use at a step: layout before the graft step, target after."""
        if self.graft_step is None:
            return "layout"
        return "layout" if step < self.graft_step else "target"


class VelocityBackend(Protocol):
    concurrent_safe: bool

    def velocities(self, x: np.ndarray, t: float, conditions: Sequence[Condition],
                   step: int = -1) -> dict[str, np.ndarray]: ...


class Scorer(Protocol):
    def score(self, x: np.ndarray) -> float: ...


def init_state(config: SamplerConfig) -> State:
    """Deterministic standard-normal draw for the configured seed; step 0."""
    rng = np.random.default_rng(config.seed)
    return State(data=rng.standard_normal(config.dim), step=0)


def eval_time(step: int, S: int) -> float:
    """Velocity evaluation time for a step: the interval midpoint (s + 1/2) / S.

    The final evaluation sits at 1 - gamma/2, so the t = 1 singularity of
    zero-stdev components is never touched.
    """
    return (step + 0.5) / S


def guided_velocity(v_uncond: np.ndarray, v_cond: np.ndarray, v_neg: np.ndarray,
                    omega: float) -> np.ndarray:
    """Negative-prompt guidance: v_uncond + omega * (v_cond - v_neg), elementwise."""
    v_uncond = np.asarray(v_uncond, dtype=float)
    v_cond = np.asarray(v_cond, dtype=float)
    v_neg = np.asarray(v_neg, dtype=float)
    if not (v_uncond.shape == v_cond.shape == v_neg.shape):
        raise InvalidArgumentError(
            f"velocity shapes differ: {v_uncond.shape}, {v_cond.shape}, {v_neg.shape}"
        )
    if not omega >= 0:
        raise InvalidArgumentError(f"omega must be >= 0, got {omega}")
    return v_uncond + omega * (v_cond - v_neg)


def euler_step(x: State, velocity: np.ndarray, gamma: float) -> State:
    """One forward Euler update x + gamma * velocity; step index advances by one."""
    velocity = np.asarray(velocity, dtype=float)
    if velocity.shape != x.data.shape:
        raise InvalidArgumentError(
            f"velocity shape {velocity.shape} != state shape {x.data.shape}"
        )
    if not np.all(np.isfinite(velocity)):
        raise NumericFailureError(f"non-finite velocity at step {x.step}", step=x.step)
    return State(data=x.data + gamma * velocity, step=x.step + 1)


def _combined(vel: dict[str, np.ndarray], cond: Condition, config: SamplerConfig,
              guided: bool) -> np.ndarray:
    try:
        v_u, v_c, v_n = vel[UNCOND_ID], vel[cond.id], vel["negative"]
    except KeyError as exc:
        raise InvalidArgumentError(f"backend response missing velocity {exc}") from exc
    if guided:
        return guided_velocity(v_u, v_c, v_n, config.omega)
    return np.asarray(v_c, dtype=float)


def sample(config: SamplerConfig, conditions: ConditionTriple, backend: VelocityBackend,
           scorer: Scorer | None, policy: GraftPolicy) -> Trajectory:
    """Run one grafted trajectory.

    Steps before the graft step condition on layout, the graft step itself and
    everything after condition on target.  Every backend call requests the
    unconditional, conditional and negative velocities; in dynamic mode the
    scorer runs at every window step until the detector fires.  Identical
    inputs produce a bitwise-identical Trajectory.
    """
    S = config.total_steps
    if policy.mode == "fixed" and policy.T > S:
        raise InvalidArgumentError(f"fixed graft step {policy.T} exceeds {S} steps")
    if policy.mode == "dynamic":
        window_bounds(policy, S)  # validated up front: may raise
        if scorer is None:
            raise InvalidArgumentError("dynamic policy requires a scorer")

    uncond = Condition(id=UNCOND_ID, text="")
    x = init_state(config)
    states = [x]
    trace = SimilarityTrace()
    graft_step: int | None = None
    scorer_failed = False

    for s in range(S):
        if graft_step is None:
            if policy.mode == "dynamic" and not scorer_failed:
                t_min, t_max = window_bounds(policy, S)
                if t_min <= s <= t_max:
                    try:
                        trace = trace.with_entry(s, float(scorer.score(x.data)))
                    except Exception as exc:
                        if not config.fallback_on_scorer_error:
                            raise SamplerAbort(
                                f"scorer failed at step {s}: {exc}",
                                partial=_finish(states, trace, graft_step, config, conditions),
                                cause=exc,
                            ) from exc
                        LOGGER.warning("scorer failed at step %d (%s); falling back to "
                                       "grafting at the window end %d", s, exc, t_max)
                        scorer_failed = True
            if policy.mode == "dynamic" and scorer_failed:
                t_min, t_max = window_bounds(policy, S)
                if s >= t_max:
                    graft_step = t_max
            elif update(trace, s, policy, S) is Decision.GRAFT_NOW:
                graft_step = s

        cond = conditions.layout if graft_step is None else conditions.target
        guided = config.apply_guidance_during_layout or graft_step is not None
        t = eval_time(s, S)
        try:
            vel = backend.velocities(x.data, t, (uncond, cond, conditions.negative), step=s)
        except Exception as exc:
            raise SamplerAbort(
                f"backend failed at step {s}: {exc}",
                partial=_finish(states, trace, graft_step, config, conditions),
                cause=exc,
            ) from exc
        x = euler_step(x, _combined(vel, cond, config, guided), config.gamma)
        states.append(x)

    return _finish(states, trace, graft_step, config, conditions)


def _finish(states, trace, graft_step, config, conditions) -> Trajectory:
    return Trajectory(states=tuple(states), similarity_trace=trace,
                      graft_step=graft_step, config=config,
                      bundle_id=conditions.bundle_id or conditions.target.text)


def batch_configs(config: SamplerConfig, n: int) -> list[SamplerConfig]:
    """Per-sample configs: sample i draws its noise from seed config.seed + i."""
    if n < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {n}")
    return [replace(config, seed=config.seed + i) for i in range(n)]


def run_batch(config: SamplerConfig, conditions: ConditionTriple, backend: VelocityBackend,
              scorer: Scorer | None, policy: GraftPolicy, n: int) -> list[Trajectory]:
    """Vectorized batch of n runs, bitwise-identical to n single runs.

    Requires a backend that broadcasts over (n, dim) state arrays (the analytic
    one does).  All per-sample arithmetic is elementwise, so row i reproduces
    `sample` with seed config.seed + i exactly.
    """
    S = config.total_steps
    configs = batch_configs(config, n)
    if policy.mode == "fixed" and policy.T > S:
        raise InvalidArgumentError(f"fixed graft step {policy.T} exceeds {S} steps")
    dynamic = policy.mode == "dynamic"
    if dynamic:
        window_bounds(policy, S)
        if scorer is None:
            raise InvalidArgumentError("dynamic policy requires a scorer")

    uncond = Condition(id=UNCOND_ID, text="")
    x = np.stack([init_state(c).data for c in configs])              # (n, dim)
    states = [x.copy()]
    traces = [SimilarityTrace() for _ in range(n)]
    graft = np.full(n, -1, dtype=int)                                # -1: not yet

    for s in range(S):
        active = graft < 0
        if dynamic and active.any():
            t_min, t_max = window_bounds(policy, S)
            if t_min <= s <= t_max:
                scores = scorer.score(x)                             # (n,)
                for i in np.flatnonzero(active):
                    traces[i] = traces[i].with_entry(s, float(scores[i]))
                    if update(traces[i], s, policy, S) is Decision.GRAFT_NOW:
                        graft[i] = s
        elif active.any():
            if update(SimilarityTrace(), s, policy, S) is Decision.GRAFT_NOW:
                graft[active] = s

        grafted_now = graft >= 0
        t = eval_time(s, S)
        vel = backend.velocities(x, t, (uncond, conditions.layout, conditions.target,
                                        conditions.negative), step=s)
        v_u, v_n = vel[UNCOND_ID], vel["negative"]
        v_layout, v_target = vel[conditions.layout.id], vel[conditions.target.id]
        v_lay_phase = (guided_velocity(v_u, v_layout, v_n, config.omega)
                       if config.apply_guidance_during_layout else v_layout)
        v_tgt_phase = guided_velocity(v_u, v_target, v_n, config.omega)
        v = np.where(grafted_now[:, None], v_tgt_phase, v_lay_phase)
        if not np.all(np.isfinite(v)):
            raise NumericFailureError(f"non-finite velocity at step {s}", step=s)
        x = x + config.gamma * v
        states.append(x.copy())

    stacked = np.stack(states)                                       # (S+1, n, dim)
    out = []
    for i in range(n):
        out.append(Trajectory(
            states=tuple(State(data=stacked[k, i], step=k) for k in range(S + 1)),
            similarity_trace=traces[i],
            graft_step=int(graft[i]) if graft[i] >= 0 else None,
            config=configs[i],
            bundle_id=conditions.bundle_id or conditions.target.text,
        ))
    return out


def run_pool(config: SamplerConfig, conditions: ConditionTriple, backend: VelocityBackend,
             scorer: Scorer | None, policy: GraftPolicy, n: int,
             workers: int = 1) -> list[Trajectory]:
    """Batch of n single runs through a worker pool; order follows the seed index.

    More than one worker requires the backend to declare itself concurrent-safe.
    """
    configs = batch_configs(config, n)
    if workers > 1 and not getattr(backend, "concurrent_safe", False):
        LOGGER.warning("backend is not concurrent-safe; forcing a single worker")
        workers = 1
    if workers <= 1:
        return [sample(c, conditions, backend, scorer, policy) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(sample, c, conditions, backend, scorer, policy)
                   for c in configs]
        return [f.result() for f in futures]
