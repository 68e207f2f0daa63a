"""Declarative run configuration: TOML/JSON file, dotted-key overrides, validation."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from .analytic import (DEFAULT_TAU, MixtureSpec, SceneSpec, condition_from_bundle,
                       scene_for_bundle, unconditional_spec)
from .detector import GraftPolicy
from .engine import Condition, ConditionTriple, SamplerConfig
from .errors import ConfigError, GraftSamplerError
from .evaluate import default_radius
from .prompts import ItemSpec, PromptBundle, RegionAssignment, assign_positions, compile_prompts

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Field:
    default: Any
    kind: str  # int | float | bool | str | items | groups | centroids
    help: str
    choices: tuple[str, ...] | None = None
    flag: bool = True  # exposed as a dotted CLI flag


SCHEMA: dict[str, dict[str, Field]] = {
    "sampler": {
        "steps": Field(100, "int", "total integration steps S"),
        "omega": Field(12.0, "float", "guidance scale"),
        "dim": Field(2, "int", "state dimension"),
        "seed": Field(0, "int", "base seed; batch sample i uses seed+i"),
        "apply_guidance_during_layout": Field(True, "bool",
                                              "apply guidance before the graft step"),
        "fallback_on_scorer_error": Field(False, "bool",
                                          "graft at the window end if the scorer fails"),
    },
    "graft": {
        "mode": Field("dynamic", "str", "graft policy", choices=("dynamic", "fixed")),
        "T": Field(None, "int", "graft step for fixed mode"),
        "k": Field(2, "int", "plateau lookback steps"),
        "epsilon": Field(2e-3, "float", "plateau tolerance"),
        "window_lo": Field(0.02, "float", "window start as a fraction of S"),
        "window_hi": Field(0.20, "float", "window end as a fraction of S"),
    },
    "scene": {
        "layout_stdev": Field(0.2, "float", "stdev of layout components"),
        "target_stdev": Field(0.8, "float", "stdev of target components"),
        "tau": Field(DEFAULT_TAU, "float", "toy similarity length scale"),
        "r": Field(None, "float", "assignment radius (default 3 * layout_stdev)"),
        "centroids": Field(None, "centroids", "position phrase -> [x, y] map", flag=False),
    },
    "backend": {
        "kind": Field("analytic", "str", "velocity backend", choices=("analytic", "remote")),
        "endpoint": Field(None, "str", "remote server URL"),
        "timeout": Field(120.0, "float", "remote request timeout in seconds"),
        "retries": Field(2, "int", "remote retry count"),
    },
    "prompts": {
        "items": Field([{"label": "rice"}, {"label": "potato salad"}], "items",
                       "item labels, comma-separated on the command line"),
        "groups": Field("auto", "groups", "region groups, e.g. '0;1,2' or 'auto'"),
        "container": Field("plate", "str", "default container word"),
    },
    "output": {
        "dir": Field("out", "str", "output directory"),
        "binary_states": Field(False, "bool", "also dump states as little-endian float32"),
    },
}


def default_config() -> dict[str, dict[str, Any]]:
    return {section: {key: copy.deepcopy(field.default) for key, field in fields.items()}
            for section, fields in SCHEMA.items()}


def _parse_scalar(raw: Any, field: Field, dotted: str) -> Any:
    if raw is None:
        return None
    try:
        if field.kind == "int":
            if isinstance(raw, bool):
                raise ValueError("boolean is not an integer")
            return int(raw)
        if field.kind == "float":
            if isinstance(raw, bool):
                raise ValueError("boolean is not a number")
            return float(raw)
        if field.kind == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "1", "yes"):
                return True
            if text in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if field.kind == "str":
            value = str(raw)
            if field.choices and value not in field.choices:
                raise ValueError(f"must be one of {field.choices}, got {value!r}")
            return value
        if field.kind == "items":
            return _parse_items(raw)
        if field.kind == "groups":
            return _parse_groups(raw)
        if field.kind == "centroids":
            return _parse_centroids(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {dotted}: {exc}") from exc
    raise ConfigError(f"config key {dotted}: unsupported field kind {field.kind}")


def _parse_items(raw: Any) -> list[dict]:
    if isinstance(raw, str):
        raw = [part.strip() for part in raw.split(",") if part.strip()]
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"items must be a non-empty list, got {raw!r}")
    items = []
    for entry in raw:
        if isinstance(entry, str):
            items.append({"label": entry})
        elif isinstance(entry, dict) and "label" in entry:
            unknown = set(entry) - {"label", "container"}
            if unknown:
                raise ValueError(f"unknown item keys {sorted(unknown)}")
            items.append(dict(entry))
        else:
            raise ValueError(f"item must be a label or a {{label, container}} table: {entry!r}")
    return items


def _parse_groups(raw: Any) -> Any:
    if isinstance(raw, str):
        text = raw.strip()
        if text == "auto":
            return "auto"
        try:
            return [[int(idx) for idx in part.split(",")] for part in text.split(";")]
        except ValueError:
            raise ValueError(f"groups must be 'auto' or like '0;1,2', got {raw!r}") from None
    if isinstance(raw, list):
        return [[int(idx) for idx in group] for group in raw]
    raise ValueError(f"groups must be 'auto', a string, or a list of lists, got {raw!r}")


def _parse_centroids(raw: Any) -> dict[str, tuple[float, float]]:
    if isinstance(raw, str):
        # override form: "phrase:x,y; phrase:x,y"
        table = {}
        for part in raw.split(";"):
            phrase, sep, coords = part.strip().partition(":")
            if not sep:
                raise ValueError(f"centroid {part.strip()!r} must look like phrase:x,y")
            table[phrase.strip()] = [float(v) for v in coords.split(",")]
        raw = table
    if not isinstance(raw, dict) or not raw:
        raise ValueError(f"centroids must be a non-empty table, got {raw!r}")
    out = {}
    for phrase, point in raw.items():
        if (not isinstance(point, (list, tuple)) or len(point) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in point)):
            raise ValueError(f"centroid for {phrase!r} must be [x, y], got {point!r}")
        out[str(phrase)] = (float(point[0]), float(point[1]))
    return out


def _read_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with path.open("rb") as fh:
            try:
                return tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    raise ConfigError(f"config file must end in .toml or .json, got {path.name}")


def load_config(path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> dict[str, dict[str, Any]]:
    """Resolve defaults <- file <- dotted overrides into the effective config dict.

    Unknown sections or keys are rejected by name.
    """
    effective = default_config()
    if path is not None:
        raw = _read_file(Path(path))
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a table of sections")
        for section, values in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must be a table")
            for key, value in values.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                effective[section][key] = _parse_scalar(value, SCHEMA[section][key],
                                                        f"{section}.{key}")
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        effective[section][key] = _parse_scalar(value, SCHEMA[section][key], dotted)
    _cross_validate(effective)
    return effective


def _cross_validate(config: dict) -> None:
    graft = config["graft"]
    if graft["mode"] == "fixed" and graft["T"] is None:
        raise ConfigError("graft.mode = fixed requires graft.T")
    if config["backend"]["kind"] == "remote" and not config["backend"]["endpoint"]:
        raise ConfigError("backend.kind = remote requires backend.endpoint")


def dump_effective(config: dict, scene: SceneSpec, path: str | Path) -> None:
    """Write the resolved config as JSON; reloading it reproduces this run."""
    resolved = {section: dict(values) for section, values in config.items()}
    resolved["scene"]["centroids"] = {
        phrase: list(point) for phrase, point in scene.region_centroids.items()
    }
    Path(path).write_text(json.dumps(resolved, indent=2) + "\n", encoding="utf-8")


# -- constructors over the effective dict -------------------------------------

def sampler_config(config: dict) -> SamplerConfig:
    s = config["sampler"]
    try:
        return SamplerConfig(
            total_steps=s["steps"], omega=s["omega"], dim=s["dim"], seed=s["seed"],
            apply_guidance_during_layout=s["apply_guidance_during_layout"],
            fallback_on_scorer_error=s["fallback_on_scorer_error"],
        )
    except GraftSamplerError as exc:
        raise ConfigError(f"sampler: {exc}") from exc


def graft_policy(config: dict) -> GraftPolicy:
    g = config["graft"]
    try:
        return GraftPolicy(mode=g["mode"], T=g["T"], k=g["k"], epsilon=g["epsilon"],
                           window_lo=g["window_lo"], window_hi=g["window_hi"])
    except GraftSamplerError as exc:
        raise ConfigError(f"graft: {exc}") from exc


def bundle_from_config(config: dict) -> PromptBundle:
    p = config["prompts"]
    items = [ItemSpec(label=entry["label"],
                      container=entry.get("container", p["container"]))
             for entry in p["items"]]
    groups = p["groups"]
    try:
        if groups == "auto":
            return compile_prompts(items, "auto")
        assignment = RegionAssignment(
            groups=tuple(tuple(g) for g in groups),
            positions=tuple(assign_positions(len(groups))),
        )
        return compile_prompts(items, assignment)
    except GraftSamplerError as exc:
        raise ConfigError(f"prompts: {exc}") from exc


def scene_from_config(config: dict, bundle: PromptBundle) -> SceneSpec:
    s = config["scene"]
    try:
        if s["centroids"] is not None:
            scene = SceneSpec(region_centroids=dict(s["centroids"]),
                              layout_stdev=s["layout_stdev"], target_stdev=s["target_stdev"])
            for phrase in bundle.regions.positions:
                scene.centroid(phrase)  # must cover every bundle phrase
            return scene
        return scene_for_bundle(bundle, layout_stdev=s["layout_stdev"],
                                target_stdev=s["target_stdev"])
    except GraftSamplerError as exc:
        raise ConfigError(f"scene: {exc}") from exc


def conditions_from_config(bundle: PromptBundle, scene: SceneSpec,
                           bundle_id: str = "") -> ConditionTriple:
    return ConditionTriple(
        layout=Condition(id="layout", text=bundle.layout,
                         mixture=condition_from_bundle(bundle, scene, "layout")),
        target=Condition(id="target", text=bundle.target,
                         mixture=condition_from_bundle(bundle, scene, "target")),
        negative=Condition(id="negative", text=bundle.negative,
                           mixture=condition_from_bundle(bundle, scene, "negative")),
        bundle_id=bundle_id or bundle.target,
    )


def radius_from_config(config: dict, scene: SceneSpec) -> float:
    r = config["scene"]["r"]
    return default_radius(scene) if r is None else float(r)


def uncond_spec_from_scene(scene: SceneSpec) -> MixtureSpec:
    return unconditional_spec(scene)
