"""Graft-point decision rule: fixed step or first similarity plateau inside a window."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidArgumentError

LOGGER = logging.getLogger(__name__)

DEFAULT_K = 2
DEFAULT_EPSILON = 2e-3
DEFAULT_WINDOW_LO = 0.02
DEFAULT_WINDOW_HI = 0.20


class Decision(Enum):
    CONTINUE = "continue"
    GRAFT_NOW = "graft_now"


@dataclass(frozen=True)
class GraftPolicy:
    """Fixed-step or dynamic plateau policy.

    mode "fixed" grafts at step T regardless of any trace; mode "dynamic"
    grafts at the first step in the window where the k-step similarity gain
    drops to epsilon or below, falling back to the window end.
    """

    mode: str = "dynamic"
    T: int | None = None
    k: int = DEFAULT_K
    epsilon: float = DEFAULT_EPSILON
    window_lo: float = DEFAULT_WINDOW_LO
    window_hi: float = DEFAULT_WINDOW_HI

    def __post_init__(self):
        if self.mode not in ("fixed", "dynamic"):
            raise InvalidArgumentError(f"unknown graft mode {self.mode!r}")
        if self.mode == "fixed" and self.T is None:
            raise InvalidArgumentError("fixed mode requires T")
        if self.mode == "fixed" and self.T < 0:
            raise InvalidArgumentError(f"fixed graft step must be >= 0, got {self.T}")
        if self.k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {self.k}")
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 <= self.window_lo < self.window_hi <= 1.0):
            raise InvalidArgumentError(
                f"window fractions must satisfy 0 <= lo < hi <= 1, got "
                f"[{self.window_lo}, {self.window_hi}]"
            )

    @staticmethod
    def fixed(T: int) -> "GraftPolicy":
        return GraftPolicy(mode="fixed", T=T)


@dataclass(frozen=True)
class SimilarityTrace:
    """Ordered (step, score) pairs; steps strictly increasing, scores finite."""

    entries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        steps = [s for s, _ in self.entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise InvalidArgumentError("trace steps must be strictly increasing")
        if any(not math.isfinite(v) for _, v in self.entries):
            raise InvalidArgumentError("trace scores must be finite")

    def score_at(self, step: int) -> float | None:
        for s, v in self.entries:
            if s == step:
                return v
        return None

    def with_entry(self, step: int, score: float) -> "SimilarityTrace":
        return SimilarityTrace(self.entries + ((step, score),))


def window_bounds(policy: GraftPolicy, S: int) -> tuple[int, int]:
    """Integer search window [t_min, t_max] for a run of S steps.

    ceil for the lower bound and floor for the upper keep the window strictly
    inside the configured fractions.
    """
    if S < 1:
        raise InvalidArgumentError(f"step count must be >= 1, got {S}")
    t_min = math.ceil(policy.window_lo * S)
    t_max = math.floor(policy.window_hi * S)
    if t_min > t_max:
        raise InvalidArgumentError(
            f"empty graft window: [{policy.window_lo}, {policy.window_hi}] of "
            f"{S} steps rounds to [{t_min}, {t_max}]"
        )
    return t_min, t_max


def update(trace: SimilarityTrace, step: int, policy: GraftPolicy, S: int) -> Decision:
    """Decide at `step` whether to graft now.

    Dynamic mode: graft at the first in-window step where both scores of the
    k-step difference exist and the difference is <= epsilon; unconditionally
    graft at the window end.  Pre-window scores may serve as the step-k
    reference when present; a score missing inside the window logs a warning
    and postpones the decision.  Fixed mode ignores the trace entirely.
    """
    if policy.mode == "fixed":
        return Decision.GRAFT_NOW if step == policy.T else Decision.CONTINUE

    t_min, t_max = window_bounds(policy, S)
    if step < t_min or step > t_max:
        return Decision.CONTINUE

    current = trace.score_at(step)
    previous = trace.score_at(step - policy.k)
    if current is not None and previous is not None:
        if current - previous <= policy.epsilon:
            return Decision.GRAFT_NOW
    elif step - policy.k >= t_min:
        # Scores inside the window are expected every step; a hole here is a
        # scorer anomaly, not the normal warm-up.
        missing = "current" if current is None else f"step {step - policy.k}"
        LOGGER.warning("cannot evaluate k-step difference at step %d: %s score missing",
                       step, missing)
    if step == t_max:
        return Decision.GRAFT_NOW  # fallback: never graft later than the window end
    return Decision.CONTINUE
