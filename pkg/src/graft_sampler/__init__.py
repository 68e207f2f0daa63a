"""Backend-pluggable flow sampling with piecewise prompt conditioning (prompt grafting)."""

from .analytic import (AnalyticBackend, LayoutScorer, MixtureSpec, SceneSpec,
                       condition_from_bundle, layout_similarity, mixture_velocity,
                       scene_for_bundle, unconditional_spec)
from .detector import Decision, GraftPolicy, SimilarityTrace, update, window_bounds
from .engine import (Condition, ConditionTriple, SamplerConfig, State, Trajectory,
                     euler_step, eval_time, guided_velocity, init_state, run_batch,
                     run_pool, sample)
from .errors import (BackendUnavailableError, ConfigError, GraftSamplerError,
                     InvalidArgumentError, NumericFailureError, ProtocolError,
                     SamplerAbort, SingularTimeError)
from .evaluate import (ABLATION_LABELS, EvalReport, ReportRow, assign_regions,
                       compare_runs, separation_score)
from .prompts import ItemSpec, PromptBundle, RegionAssignment, assign_positions, compile_prompts
from .remote import RemoteBackend, RemoteConfig, RemoteScorer

__version__ = "0.1.0"

__all__ = [
    "ABLATION_LABELS", "AnalyticBackend", "BackendUnavailableError", "Condition",
    "ConditionTriple", "ConfigError", "Decision", "EvalReport", "GraftPolicy",
    "GraftSamplerError", "InvalidArgumentError", "ItemSpec", "LayoutScorer",
    "MixtureSpec", "NumericFailureError", "PromptBundle", "ProtocolError",
    "RegionAssignment", "RemoteBackend", "RemoteConfig", "RemoteScorer", "ReportRow",
    "SamplerAbort", "SamplerConfig", "SceneSpec", "SimilarityTrace", "SingularTimeError",
    "State", "Trajectory", "assign_positions", "assign_regions", "compare_runs",
    "compile_prompts", "condition_from_bundle", "euler_step", "eval_time",
    "guided_velocity", "init_state", "layout_similarity", "mixture_velocity",
    "run_batch", "run_pool", "sample", "scene_for_bundle", "separation_score",
    "unconditional_spec", "update", "window_bounds",
]
