"""Command line: compile, sample, detect, eval, demo-separation, serve-stub."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .ablation import run_grid
from .config import (SCHEMA, bundle_from_config, conditions_from_config, dump_effective,
                     graft_policy, load_config, radius_from_config, sampler_config,
                     scene_from_config, uncond_spec_from_scene)
from .analytic import AnalyticBackend, LayoutScorer
from .detector import Decision, GraftPolicy, SimilarityTrace, update, window_bounds
from .engine import run_batch, run_pool, sample
from .errors import (BackendUnavailableError, ConfigError, InvalidArgumentError,
                     NumericFailureError, ProtocolError, SamplerAbort, SingularTimeError)
from .evaluate import compare_runs
from .figures import report_figure, trace_figure, trajectory_figure
from .remote import RemoteBackend, RemoteConfig, RemoteScorer
from .stub import MODES, StubModel, make_server
from .trajectory import read_trace_csv, write_summary, write_trace_csv, write_trajectory

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_NUMERIC = 4

_FLAG_KEYS = [f"{section}.{key}"
              for section, fields in SCHEMA.items()
              for key, field in fields.items() if field.flag]
_ALIASES = (("seed", "sampler.seed"), ("items", "prompts.items"),
            ("groups", "prompts.groups"), ("container", "prompts.container"))


def _configure_logging() -> None:
    raw = os.environ.get("GRAFT_SAMPLER_LOG", "WARNING").upper()
    level = getattr(logging, raw, None)
    if not isinstance(level, int):
        level = int(raw) if raw.isdigit() else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_schema_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (win over the file)")
    group.add_argument("--config", metavar="PATH", default=None,
                       help="run-config file, .toml or .json")
    for section, fields in SCHEMA.items():
        for key, field in fields.items():
            if not field.flag:
                continue
            kwargs = {
                "dest": f"{section}.{key}",
                "metavar": field.kind.upper(),
                "default": None,
                "help": f"{field.help} (default: {field.default})",
            }
            if field.choices:
                kwargs["choices"] = field.choices
                kwargs["metavar"] = "|".join(field.choices)
            group.add_argument(f"--{section}.{key}", **kwargs)


def _load(args: argparse.Namespace) -> dict:
    overrides = {}
    for dotted in _FLAG_KEYS:
        value = getattr(args, dotted, None)
        if value is not None:
            overrides[dotted] = value
    for alias, dotted in _ALIASES:
        value = getattr(args, alias, None)
        if value is not None:
            overrides[dotted] = value
    return load_config(getattr(args, "config", None), overrides)


def _outdir(config: dict) -> Path:
    path = Path(config["output"]["dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _backend_and_scorer(config: dict, bundle, scene, conditions, policy):
    """Velocity backend plus a layout scorer (dynamic mode only)."""
    if config["backend"]["kind"] == "remote":
        backend = RemoteBackend(RemoteConfig(endpoint=config["backend"]["endpoint"],
                                             timeout=config["backend"]["timeout"],
                                             retries=config["backend"]["retries"]))
        scorer = RemoteScorer(backend, bundle.layout) if policy.mode == "dynamic" else None
        return backend, scorer
    backend = AnalyticBackend(uncond=uncond_spec_from_scene(scene))
    scorer = None
    if policy.mode == "dynamic":
        scorer = LayoutScorer(conditions.layout.mixture, tau=config["scene"]["tau"])
    return backend, scorer


def cmd_compile(args: argparse.Namespace) -> int:
    config = _load(args)
    bundle = bundle_from_config(config)
    payload = {
        "target": bundle.target,
        "layout": bundle.layout,
        "negative": bundle.negative,
        "groups": [list(group) for group in bundle.regions.groups],
        "positions": list(bundle.regions.positions),
        "items": [{"label": item.label, "container": item.container} for item in bundle.items],
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    config = _load(args)
    bundle = bundle_from_config(config)
    scene = scene_from_config(config, bundle)
    conditions = conditions_from_config(bundle, scene)
    sampler = sampler_config(config)
    policy = graft_policy(config)
    backend, scorer = _backend_and_scorer(config, bundle, scene, conditions, policy)
    outdir = _outdir(config)
    binary = config["output"]["binary_states"]

    n = args.samples
    if n == 1:
        trajectories = [sample(sampler, conditions, backend, scorer, policy)]
    elif config["backend"]["kind"] == "analytic":
        if args.workers != 1:
            LOGGER.info("analytic batches are vectorized; --workers ignored")
        trajectories = run_batch(sampler, conditions, backend, scorer, policy, n)
    else:
        trajectories = run_pool(sampler, conditions, backend, scorer, policy, n,
                                workers=args.workers)

    # Single collector: files land in seed order regardless of worker timing.
    samples_meta = []
    for i, traj in enumerate(trajectories):
        stem = "trajectory" if n == 1 else f"trajectory_{i:04d}"
        trajectory_path = outdir / f"{stem}.jsonl"
        write_trajectory(traj, trajectory_path, binary_states=binary)
        trace_name = "trace.csv" if n == 1 else f"trace_{i:04d}.csv"
        write_trace_csv(traj.similarity_trace, outdir / trace_name)
        samples_meta.append({
            "seed": traj.config.seed,
            "graft_step": traj.graft_step,
            "terminal": [float(v) for v in traj.terminal],
            "trajectory_path": trajectory_path.name,
            "similarity_trace_path": trace_name,
        })
    figure = trajectory_figure(trajectories[0], scene, outdir / "trajectory.png",
                               r=radius_from_config(config, scene))
    summary = {
        "bundle_id": conditions.bundle_id,
        "total_steps": sampler.total_steps,
        "omega": sampler.omega,
        "graft_mode": policy.mode,
        "graft_step": samples_meta[0]["graft_step"],
        "terminal": samples_meta[0]["terminal"],
        "similarity_trace_path": samples_meta[0]["similarity_trace_path"],
        "figure_path": figure.name,
        "samples": samples_meta,
    }
    write_summary(summary, outdir / "summary.json")
    dump_effective(config, scene, outdir / "effective_config.json")
    print(f"graft step: {summary['graft_step']}")
    print(f"terminal: {summary['terminal']}")
    print(f"wrote {outdir / 'summary.json'}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    trace = read_trace_csv(args.trace)
    policy = GraftPolicy(mode="dynamic", k=args.k, epsilon=args.epsilon,
                         window_lo=args.window_lo, window_hi=args.window_hi)
    t_min, t_max = window_bounds(policy, args.steps)
    graft_step = t_max
    for step in range(t_min, t_max + 1):
        visible = SimilarityTrace(tuple(e for e in trace.entries if e[0] <= step))
        if update(visible, step, policy, args.steps) is Decision.GRAFT_NOW:
            graft_step = step
            break
    current = trace.score_at(graft_step)
    previous = trace.score_at(graft_step - policy.k)
    plateau = (current is not None and previous is not None
               and current - previous <= policy.epsilon)
    reason = "plateau" if plateau else "window-end fallback"
    print(f"graft step: {graft_step} ({reason}; window [{t_min}, {t_max}])")
    if args.figure:
        trace_figure(trace, graft_step, args.figure)
        print(f"wrote {args.figure}")
    return EXIT_OK


def _eval_common(args: argparse.Namespace, labels: tuple[str, ...]):
    config = _load(args)
    if config["backend"]["kind"] != "analytic":
        raise ConfigError("backend.kind: the ablation grid runs on the analytic backend "
                          "(the baseline row overrides the unconditional field)")
    bundle = bundle_from_config(config)
    scene = scene_from_config(config, bundle)
    conditions = conditions_from_config(bundle, scene)
    sampler = sampler_config(config)
    policy = graft_policy(config)
    rows = run_grid(sampler, conditions, scene, policy, args.samples,
                    tau=config["scene"]["tau"], labels=labels)
    report = compare_runs(rows, scene, r=radius_from_config(config, scene))
    outdir = _outdir(config)
    (outdir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (outdir / "report.json").write_text(report.to_json(), encoding="utf-8")
    report_figure(rows, scene, report, outdir / "report.png")
    sys.stdout.write(report.to_csv())
    print(f"wrote {outdir / 'report.csv'}")
    return report, EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    _, code = _eval_common(args, labels=("SC-only", "PG-fixed-3", "PG-fixed-5",
                                         "PG-fixed-7", "PG-fixed-10", "PG-dynamic"))
    return code


def cmd_demo_separation(args: argparse.Namespace) -> int:
    report, code = _eval_common(args, labels=("PG-dynamic", "SC-only"))
    grafted = report.row("PG-dynamic").separation
    baseline = report.row("SC-only").separation
    print(f"separation: PG-dynamic {grafted:.4f} vs SC-only {baseline:.4f}")
    if not (grafted > baseline):
        LOGGER.warning("grafted separation does not exceed the baseline")
    return code


def cmd_serve_stub(args: argparse.Namespace) -> int:
    config = _load(args)
    bundle = bundle_from_config(config)
    scene = scene_from_config(config, bundle)
    model = StubModel(bundle, scene, mode=args.mode, tau=config["scene"]["tau"])
    server = make_server(model, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving stub backend at http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graft-sampler",
        description="Piecewise prompt conditioning for flow sampling: layout first, "
                    "then graft onto the target prompt at a similarity plateau.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("compile", help="compile item labels into the prompt triple")
    p.add_argument("--items", metavar="A,B,...", default=None,
                   help="comma-separated item labels")
    p.add_argument("--groups", metavar="SPEC", default=None,
                   help="region groups as index lists, e.g. '0;1,2', or 'auto'")
    p.add_argument("--container", metavar="WORD", default=None,
                   help="default container word")
    _add_schema_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sample", help="run trajectories and write the output bundle")
    p.add_argument("--seed", metavar="INT", default=None, help="base seed (sampler.seed)")
    p.add_argument("--samples", metavar="N", type=int, default=1,
                   help="number of seeded trajectories (default: 1)")
    p.add_argument("--workers", metavar="N", type=int, default=1,
                   help="worker pool size for remote batches (default: 1)")
    _add_schema_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("detect", help="replay a similarity trace through the detector")
    p.add_argument("--trace", metavar="PATH", required=True, help="trace CSV (step,score)")
    p.add_argument("--steps", metavar="S", type=int, default=100,
                   help="total steps of the originating run (default: 100)")
    p.add_argument("--k", metavar="INT", type=int, default=2,
                   help="plateau lookback (default: 2)")
    p.add_argument("--epsilon", metavar="FLOAT", type=float, default=2e-3,
                   help="plateau tolerance (default: 0.002)")
    p.add_argument("--window-lo", metavar="FRAC", type=float, default=0.02,
                   help="window start fraction (default: 0.02)")
    p.add_argument("--window-hi", metavar="FRAC", type=float, default=0.20,
                   help="window end fraction (default: 0.20)")
    p.add_argument("--figure", metavar="PATH", default=None,
                   help="also render the trace plot to this file")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="run the six-row ablation grid and write the report")
    p.add_argument("--samples", metavar="N", type=int, default=200,
                   help="trajectories per row (default: 200)")
    _add_schema_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo-separation",
                       help="grafted vs pure-target separation on the packaged scenario")
    p.add_argument("--samples", metavar="N", type=int, default=1000,
                   help="trajectories per row (default: 1000)")
    _add_schema_flags(p)
    p.set_defaults(func=cmd_demo_separation)

    p = sub.add_parser("serve-stub", help="serve the analytic backend over the wire protocol")
    p.add_argument("--host", metavar="HOST", default="127.0.0.1",
                   help="bind address (default: 127.0.0.1)")
    p.add_argument("--port", metavar="PORT", type=int, default=0,
                   help="bind port; 0 picks a free port (default: 0)")
    p.add_argument("--mode", choices=MODES, default="analytic",
                   help="stub behavior (default: analytic)")
    _add_schema_flags(p)
    p.set_defaults(func=cmd_serve_stub)
    return parser


def _fail(exc: Exception) -> None:
    print(f"error: {exc}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail(exc)
        return EXIT_CONFIG
    except (BackendUnavailableError, ProtocolError) as exc:
        _fail(exc)
        return EXIT_BACKEND
    except SamplerAbort as exc:
        _fail(exc)
        if isinstance(exc.cause, (BackendUnavailableError, ProtocolError)):
            return EXIT_BACKEND
        return EXIT_NUMERIC
    except (SingularTimeError, NumericFailureError) as exc:
        _fail(exc)
        return EXIT_NUMERIC
    except InvalidArgumentError as exc:
        _fail(exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
