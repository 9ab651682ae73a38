"""Command-line entry point: ``eru-fusion {fuse,eval,synth,augment,buckets}``.

Exit codes: 0 success, 1 internal error, 2 input or usage error. Every output
file gets a ``<out>.manifest.json`` sidecar describing the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .augment import BackendConfigError, HttpBackend, expand_dataset, stub_backend
from .data import SceneFormatError, iter_scenes, read_scenes, write_scenes
from .fusion import STRATEGY_NAMES, FusionConfig, FusionError, MissingModelError, fuse_scene, trace_to_dict
from .metrics import DEFAULT_THRESHOLDS, assign_buckets, evaluate, render_reports
from .synth import SynthConfig, TopOne, generate

logger = logging.getLogger("eru_fusion")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2

# model top-1 baselines accepted by ``eval`` next to the fusion rules
BASELINES = {"only-aug": "aug_model_name", "only-depth": "depth_model_name"}


class InputError(Exception):
    """Bad flags or input files; maps to exit code 2."""


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: str | Path, command: str, args: argparse.Namespace, inputs: Sequence[str] = (), seed=None) -> Path:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "tool_version": __version__,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _fusion_config(args: argparse.Namespace) -> FusionConfig:
    try:
        return FusionConfig(
            t1_iou=args.t1,
            t2_conf=args.t2,
            distance_half_angle_deg=args.distance_cone,
            raster_half_angle_deg=args.raster_cone,
            aug_model_name=args.aug_name,
            depth_model_name=args.depth_name,
        )
    except FusionError as exc:
        raise InputError(str(exc)) from None


def _parallel_map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _fuse_one(rec, strategy: str, cfg: FusionConfig) -> dict:
    return trace_to_dict(rec.id, fuse_scene(rec, strategy, cfg))


def cmd_fuse(args: argparse.Namespace) -> int:
    cfg = _fusion_config(args)
    numbered = list(iter_scenes(args.scenes))
    missing = [
        f"line {n}: scene {rec.id!r} has no output for model {name!r}"
        for n, rec in numbered
        for name in (cfg.aug_model_name, cfg.depth_model_name)
        if name not in rec.outputs
    ]
    if missing:
        raise InputError("; ".join(missing[:10]) + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""))
    rows = _parallel_map(partial(_fuse_one, strategy=args.strategy, cfg=cfg), [r for _, r in numbered], args.jobs)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    write_manifest(args.out, "fuse", args, [args.scenes])
    print(f"fused {len(rows)} scene(s) with {args.strategy} -> {args.out}")
    return EXIT_OK


def _parse_thresholds(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise InputError(f"bad --thresholds {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise InputError(f"thresholds must be in [0, 1], got {text!r}")
    return values


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _fusion_config(args)
    thresholds = _parse_thresholds(args.thresholds)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGY_NAMES and s not in BASELINES]
    if not strategies or unknown:
        raise InputError(f"unknown strategies {unknown}; choose from {', '.join(STRATEGY_NAMES + tuple(BASELINES))}")
    records = read_scenes(args.scenes)
    if not records:
        raise InputError(f"{args.scenes}: no scenes")
    records, _ = assign_buckets(records)
    reports = {}
    for name in strategies:
        strategy = TopOne(getattr(cfg, BASELINES[name])) if name in BASELINES else name
        reports[name] = evaluate(records, strategy, cfg, thresholds, jobs=args.jobs)
        if reports[name].failed_ids:
            print(f"{name}: {len(reports[name].failed_ids)} scene(s) could not be processed (counted as wrong)")
    text = render_reports(reports, args.format, thresholds)
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    write_manifest(args.out, "eval", args, [args.scenes])
    print(text, end="")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        cfg = SynthConfig(
            n_scenes=args.n,
            seed=args.seed,
            image_width=args.width,
            image_height=args.height,
            objects_per_scene=(args.objects_min, args.objects_max),
            p_aug_correct=args.p_aug,
            p_depth_correct=args.p_depth,
            depth_critical_fraction=args.critical_fraction,
            pointing_noise_deg=args.noise_deg,
            box_jitter_frac=args.jitter,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    records = generate(cfg)
    write_scenes(records, args.out)
    write_manifest(args.out, "synth", args, seed=args.seed)
    print(f"wrote {len(records)} scene(s) -> {args.out}")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    if args.backend == "http":
        try:
            backend = HttpBackend.from_env()
        except BackendConfigError as exc:
            raise InputError(str(exc)) from None
    else:
        backend = stub_backend
    records = read_scenes(args.scenes)
    result = expand_dataset(records, backend, max_retries=args.max_retries, max_in_flight=args.max_in_flight)
    write_scenes(result.records, args.out)
    write_manifest(args.out, "augment", args, [args.scenes])
    print(f"{result.n_input} -> {len(result.records)} records (x{result.multiplier:.2f}), failures: {len(result.failed_ids)}")
    return EXIT_OK


def cmd_buckets(args: argparse.Namespace) -> int:
    records = read_scenes(args.scenes)
    if not records:
        raise InputError(f"{args.scenes}: no scenes to bucket")
    labelled, bounds = assign_buckets(records)
    write_scenes(labelled, args.out)
    write_manifest(args.out, "buckets", args, [args.scenes])
    sizes = {c: sum(r.size_class == c for r in labelled) for c in ("S", "M", "L")}
    print(f"boundaries: lower={bounds.lower!r} upper={bounds.upper!r}")
    print(f"counts: S={sizes['S']} M={sizes['M']} L={sizes['L']}")
    return EXIT_OK


def _add_fusion_flags(p: argparse.ArgumentParser) -> None:
    d = FusionConfig()
    p.add_argument("--t1", type=float, default=d.t1_iou, help="IoU gate threshold (default %(default)s)")
    p.add_argument("--t2", type=float, default=d.t2_conf, help="second-prediction confidence threshold (default %(default)s)")
    p.add_argument("--distance-cone", type=float, default=d.distance_half_angle_deg, help="cone half angle for distances, degrees")
    p.add_argument("--raster-cone", type=float, default=d.raster_half_angle_deg, help="cone half angle for overlap strategies, degrees")
    p.add_argument("--aug-name", default=d.aug_model_name)
    p.add_argument("--depth-name", default=d.depth_model_name)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eru-fusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="pick one box per scene")
    p.add_argument("scenes")
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default="dadm")
    p.add_argument("--out", required=True)
    _add_fusion_flags(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="accuracy table for one or more strategies")
    p.add_argument("scenes")
    p.add_argument("--strategies", default=",".join(STRATEGY_NAMES))
    p.add_argument("--thresholds", default=",".join(f"{t:.2f}" for t in DEFAULT_THRESHOLDS))
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", required=True)
    _add_fusion_flags(p)
    p.set_defaults(func=cmd_eval)

    d = SynthConfig(0, 0)
    p = sub.add_parser("synth", help="generate a synthetic scene set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=int, default=d.image_width)
    p.add_argument("--height", type=int, default=d.image_height)
    p.add_argument("--objects-min", type=int, default=d.objects_per_scene[0])
    p.add_argument("--objects-max", type=int, default=d.objects_per_scene[1])
    p.add_argument("--p-aug", type=float, default=d.p_aug_correct)
    p.add_argument("--p-depth", type=float, default=d.p_depth_correct)
    p.add_argument("--critical-fraction", type=float, default=d.depth_critical_fraction)
    p.add_argument("--noise-deg", type=float, default=d.pointing_noise_deg)
    p.add_argument("--jitter", type=float, default=d.box_jitter_frac)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="expand sentences 21x with an LLM backend")
    p.add_argument("scenes")
    p.add_argument("--backend", choices=("stub", "http"), default="stub")
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("buckets", help="assign S/M/L size classes")
    p.add_argument("scenes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_buckets)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SceneFormatError, MissingModelError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
