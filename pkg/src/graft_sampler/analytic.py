"""Closed-form Gaussian-mixture backend: exact conditioned velocities and a toy scorer."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularTimeError
from .prompts import PromptBundle

LOGGER = logging.getLogger(__name__)

DEFAULT_LAYOUT_STDEV = 0.2
DEFAULT_TARGET_STDEV = 0.8
DEFAULT_TAU = 1.0

# Geometric reading of the position phrases, on a +-2 scale.  Two/three-region
# bundles use the pinned left/center/right points; grids use the same scale on
# both axes; a single-region bundle has no cue and sits at the origin.
PHRASE_POINTS: dict[str, tuple[float, float]] = {
    "": (0.0, 0.0),
    "on the left": (-2.0, 0.0),
    "on the right": (2.0, 0.0),
    "in the center": (0.0, 0.0),
}
for _row, _y in (("upper", 2.0), ("middle", 0.0), ("lower", -2.0)):
    for _col, _x in (("left", -2.0), ("center", 0.0), ("right", 2.0)):
        PHRASE_POINTS[f"on the {_row} {_col}"] = (_x, _y)


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: (mean, stdev, weight) components over R^dim."""

    means: tuple[tuple[float, ...], ...]
    stdevs: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.means:
            raise InvalidArgumentError("mixture needs at least one component")
        if not (len(self.means) == len(self.stdevs) == len(self.weights)):
            raise InvalidArgumentError("means, stdevs and weights must have equal length")
        dim = len(self.means[0])
        if any(len(m) != dim for m in self.means):
            raise InvalidArgumentError("all component means must share one dimension")
        # Zero stdev encodes an exact point mass; it is only singular at t = 1.
        if any(s < 0 for s in self.stdevs):
            raise InvalidArgumentError("component stdevs must be non-negative")
        if any(w <= 0 for w in self.weights):
            raise InvalidArgumentError("component weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"weights must sum to 1, got {sum(self.weights)}")

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def n_components(self) -> int:
        return len(self.means)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.asarray(self.means, dtype=float),
            np.asarray(self.stdevs, dtype=float),
            np.asarray(self.weights, dtype=float),
        )

    @staticmethod
    def single(mean, stdev: float) -> "MixtureSpec":
        return MixtureSpec(means=(tuple(float(v) for v in mean),),
                           stdevs=(float(stdev),), weights=(1.0,))


@dataclass(frozen=True)
class SceneSpec:
    """Geometry of a toy scene: centroid per position phrase plus the two spreads."""

    region_centroids: dict[str, tuple[float, float]]
    layout_stdev: float = DEFAULT_LAYOUT_STDEV
    target_stdev: float = DEFAULT_TARGET_STDEV

    def __post_init__(self):
        if not self.region_centroids:
            raise InvalidArgumentError("scene needs at least one region centroid")
        points = [tuple(p) for p in self.region_centroids.values()]
        if len(set(points)) != len(points):
            raise InvalidArgumentError("region centroids must be pairwise distinct")
        if not self.layout_stdev > 0 or not self.target_stdev > 0:
            raise InvalidArgumentError("scene stdevs must be positive")

    def centroid(self, phrase: str) -> tuple[float, float]:
        try:
            return tuple(self.region_centroids[phrase])
        except KeyError:
            raise InvalidArgumentError(f"unknown position phrase: {phrase!r}") from None

    def centroid_mean(self) -> tuple[float, float]:
        pts = np.asarray(list(self.region_centroids.values()), dtype=float)
        return tuple(pts.mean(axis=0))


def scene_for_bundle(bundle: PromptBundle, layout_stdev: float = DEFAULT_LAYOUT_STDEV,
                     target_stdev: float = DEFAULT_TARGET_STDEV) -> SceneSpec:
    """Minimal scene covering exactly the bundle's position phrases (default geometry)."""
    centroids = {}
    for phrase in bundle.regions.positions:
        if phrase not in PHRASE_POINTS:
            raise InvalidArgumentError(f"unknown position phrase: {phrase!r}")
        centroids[phrase] = PHRASE_POINTS[phrase]
    return SceneSpec(region_centroids=centroids, layout_stdev=layout_stdev,
                     target_stdev=target_stdev)


def condition_from_bundle(bundle: PromptBundle, scene: SceneSpec, role: str) -> MixtureSpec:
    """Mixture for one prompt role.

    layout: one tight component per region at its centroid (the "plates");
    target: one broad component per item at its group's centroid (the "foods");
    negative: a single wide component at the centroid mean (the "empty" scene).
    """
    positions = bundle.regions.positions
    if role == "layout":
        n = len(positions)
        return MixtureSpec(
            means=tuple(scene.centroid(p) for p in positions),
            stdevs=(scene.layout_stdev,) * n,
            weights=(1.0 / n,) * n,
        )
    if role == "target":
        means = []
        for group, phrase in zip(bundle.regions.groups, positions):
            means.extend([scene.centroid(phrase)] * len(group))
        n = len(means)
        return MixtureSpec(means=tuple(means), stdevs=(scene.target_stdev,) * n,
                           weights=(1.0 / n,) * n)
    if role == "negative":
        return MixtureSpec.single(scene.centroid_mean(), 2.0 * scene.target_stdev)
    raise InvalidArgumentError(f"unknown condition role: {role!r}")


def unconditional_spec(scene: SceneSpec) -> MixtureSpec:
    """Mixture behind the empty prompt: one centered blob, half the target spread.

    Models the center bias of an unprompted generator; the spread is calibrated
    so that guided runs land on the region centroids (see package docs).
    """
    return MixtureSpec.single(scene.centroid_mean(), scene.target_stdev / 2.0)


def _log_responsibilities(x: np.ndarray, t: float, means: np.ndarray,
                          variances: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # log r_j(x, t) for x of shape (N, d); responsibilities are the posterior
    # component weights of the time-t marginal N(t mu_j, V_j I).
    d = x.shape[1]
    diff = x[:, None, :] - t * means[None, :, :]                     # (N, J, d)
    log_p = (np.log(weights)[None, :]
             - 0.5 * np.sum(diff * diff, axis=-1) / variances[None, :]
             - 0.5 * d * np.log(variances)[None, :])
    log_p -= log_p.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):  # exact zeros are fine post-shift
        log_norm = np.log(np.sum(np.exp(log_p), axis=1, keepdims=True))
    return log_p - log_norm


def mixture_velocity(x: np.ndarray, t: float, spec: MixtureSpec) -> np.ndarray:
    """Exact marginal velocity of the linear noise-to-data path at (x, t).

    For the path x_t = t y + (1 - t) z with y drawn from component j of the
    mixture and z standard normal, (y, x_t) is jointly Gaussian with
    x_t | j ~ N(t mu_j, V_j I), V_j = t^2 sigma_j^2 + (1 - t)^2.  The
    conditional expectations of y and z given x_t = x give the two-scalar
    per-component form

        v_j(x, t) = alpha_j x + beta_j mu_j,
        alpha_j = (t sigma_j^2 - (1 - t)) / V_j,
        beta_j  = 1 - t alpha_j,

    and the marginal velocity is the responsibility-weighted combination
    v = sum_j r_j v_j with r_j proportional to w_j N(x; t mu_j, V_j I).
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidArgumentError(f"time must lie in [0, 1], got {t}")
    means, stdevs, weights = spec.arrays()
    if t == 1.0 and np.any(stdevs == 0.0):
        raise SingularTimeError("velocity singular at t = 1 for a zero-stdev component")
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    if x2.shape[1] != spec.dim:
        raise InvalidArgumentError(f"state dim {x2.shape[1]} != mixture dim {spec.dim}")
    if not np.all(np.isfinite(x2)):
        raise InvalidArgumentError("state must be finite")

    variances = (t * stdevs) ** 2 + (1.0 - t) ** 2                   # (J,)
    alpha = (t * stdevs**2 - (1.0 - t)) / variances                  # (J,)
    beta = 1.0 - t * alpha                                           # (J,)

    if spec.n_components == 1:
        v = alpha[0] * x2 + beta[0] * means[0][None, :]
    else:
        r = np.exp(_log_responsibilities(x2, t, means, variances, weights))  # (N, J)
        per = (alpha[None, :, None] * x2[:, None, :]
               + beta[None, :, None] * means[None, :, :])            # (N, J, d)
        v = np.sum(r[:, :, None] * per, axis=1)
    return v[0] if squeeze else v


def layout_similarity(x: np.ndarray, spec: MixtureSpec, tau: float = DEFAULT_TAU):
    """Toy image-text similarity: exp(-min_j ||x - mu_j||^2 / (2 tau^2)) in (0, 1]."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    means = np.asarray(spec.means, dtype=float)
    squeeze = np.asarray(x).ndim == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    d2 = np.sum((x2[:, None, :] - means[None, :, :]) ** 2, axis=-1).min(axis=1)
    s = np.exp(-d2 / (2.0 * tau * tau))
    return float(s[0]) if squeeze else s


def decode(x: np.ndarray) -> np.ndarray:
    """Identity: toy states already are the "image"."""
    return x


@dataclass
class LayoutScorer:
    """Scores states against the layout mixture with the toy similarity."""

    spec: MixtureSpec
    tau: float = DEFAULT_TAU

    def score(self, x: np.ndarray):
        return layout_similarity(decode(x), self.spec, self.tau)


@dataclass
class AnalyticBackend:
    """Velocity model over mixture-valued conditions; safe for concurrent calls.

    Conditions carrying a mixture are evaluated exactly; the unconditional
    condition (empty text) falls back to `uncond`.
    """

    uncond: MixtureSpec
    name: str = "analytic"

    @property
    def concurrent_safe(self) -> bool:
        return True

    @property
    def latent_shape(self) -> tuple[int, ...]:
        return (self.uncond.dim,)

    def spec_for(self, condition) -> MixtureSpec:
        if condition.mixture is not None:
            return condition.mixture
        if condition.text == "" or condition.id == "uncond":
            return self.uncond
        raise InvalidArgumentError(
            f"analytic backend cannot interpret condition {condition.id!r} without a mixture"
        )

    def velocities(self, x: np.ndarray, t: float, conditions,
                   step: int = -1) -> dict[str, np.ndarray]:
        return {c.id: mixture_velocity(x, t, self.spec_for(c)) for c in conditions}

    def decode(self, x: np.ndarray) -> np.ndarray:
        return decode(x)
