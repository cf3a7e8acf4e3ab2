"""Command-line entry point: consensus / features / similarity / synth / pipeline.

Exit codes: 0 success, 2 for usage errors and data-contract violations (the
message names the offending file, and line where applicable)."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import PipelineConfig, SelectionConfig, config_from_dict
from .core import EarsimError
from .ingest import parse_manifest
from .pipeline import (
    run_consensus,
    run_features,
    run_pipeline,
    run_similarity,
    validate_payload,
)
from .synth import generate_dataset, spec_from_dict


def _jobs_from_env() -> int:
    raw = os.environ.get("EARSIM_JOBS")
    if raw is None:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise EarsimError(f"EARSIM_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise EarsimError(f"EARSIM_JOBS must be >= 1, got {jobs}")
    return jobs


def _resolve_config(args) -> tuple[PipelineConfig, dict]:
    """Effective config = config file, then CLI overrides, then EARSIM_JOBS.

    Returns the config plus the file's `synthetic` section (synth spec lives
    outside PipelineConfig)."""
    raw: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise EarsimError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise EarsimError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise EarsimError(f"{path}: config root must be an object")
    synth_raw = raw.pop("synthetic", None) or {}
    cfg = config_from_dict(raw)

    overrides: dict = {}
    if getattr(args, "selection_mode", None):
        overrides["selection"] = SelectionConfig(mode=args.selection_mode)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    jobs = getattr(args, "jobs", None)
    overrides["jobs"] = jobs if jobs is not None else _jobs_from_env()
    if overrides["jobs"] < 1:
        raise EarsimError(f"--jobs must be >= 1, got {overrides['jobs']}")
    return dataclasses.replace(cfg, **overrides), synth_raw


def _cmd_consensus(args) -> int:
    cfg, _ = _resolve_config(args)
    subjects = parse_manifest(args.manifest)
    payload, _ = run_consensus(subjects, Path(args.out), cfg.jobs)
    print(f"consensus: {len(payload['subjects'])} subject(s) -> {args.out}")
    return 0


def _cmd_features(args) -> int:
    cfg, _ = _resolve_config(args)
    subjects = parse_manifest(args.manifest)
    payload = run_features(subjects, Path(args.out), cfg, cfg.jobs, args.stage)
    print(
        f"features: {len(payload['datasets'])} dataset(s), "
        f"{len(payload['notices'])} notice(s) -> {args.out}"
    )
    return 0


def _cmd_similarity(args) -> int:
    cfg, _ = _resolve_config(args)
    payload = run_similarity(
        Path(args.features), Path(args.out), cfg, cfg.jobs, args.stage, args.self_pair
    )
    print(
        f"similarity: {len(payload['scores'])} score(s), "
        f"{len(payload['absences'])} absence(s) -> {args.out}"
    )
    return 0


def _cmd_synth(args) -> int:
    cfg, synth_raw = _resolve_config(args)
    spec = spec_from_dict(synth_raw)
    manifest_path = generate_dataset(spec, cfg.seed, args.out)
    validate_payload(json.loads(manifest_path.read_text()), "manifest")
    print(f"synth: {spec.subjects} subject(s), seed {cfg.seed} -> {manifest_path}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg, _ = _resolve_config(args)
    subjects = parse_manifest(args.manifest)
    summary = run_pipeline(subjects, Path(args.out), cfg, args.stage)
    counts = summary["counts"]
    print(
        f"pipeline: {counts['subjects']} subject(s), "
        f"{counts['feature_datasets']} dataset(s), "
        f"{counts['scores_inear']}+{counts['scores_psg']} score(s), "
        f"{counts['absences']} absence(s) in {summary['timings']['total']}s -> {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earsim",
        description="Agreement analysis between in-ear EEG and PSG sleep recordings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, manifest=False, features=False):
        if manifest:
            p.add_argument("--manifest", required=True, help="recording manifest JSON")
        if features:
            p.add_argument("--features", required=True, help="feature store directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="config JSON file")
        p.add_argument("--jobs", type=int, help="worker threads (default: $EARSIM_JOBS or 1)")
        p.add_argument("--seed", type=int, help="seed recorded in config (synth: generator seed)")

    p = sub.add_parser("consensus", help="hypnogram track: soft-agreement, consensus, kappa")
    common(p, manifest=True)
    p.set_defaults(func=_cmd_consensus)

    p = sub.add_parser("features", help="build the per-(subject, channel, stage) feature store")
    common(p, manifest=True)
    p.add_argument("--stage", choices=["W", "NREM", "REM"], help="restrict to one stage")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("similarity", help="selection + JSD similarity campaign over a feature store")
    common(p, features=True)
    p.add_argument("--stage", choices=["W", "NREM", "REM"], help="restrict to one stage")
    p.add_argument("--selection-mode", choices=["subset", "all45"], dest="selection_mode")
    p.add_argument("--self-pair", action="store_true", dest="self_pair",
                   help="smoke mode: compare the in-ear channel to itself")
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("synth", help="generate a synthetic two-source dataset")
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="consensus -> features -> similarity, end to end")
    common(p, manifest=True)
    p.add_argument("--stage", choices=["W", "NREM", "REM"], help="restrict to one stage")
    p.add_argument("--selection-mode", choices=["subset", "all45"], dest="selection_mode")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EarsimError as exc:
        print(f"earsim: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        name = getattr(exc, "filename", None) or exc
        print(f"earsim: error: missing file: {name}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
