#!/usr/bin/env python3
"""Full-scale agreement benchmark.

Generates the graded-mixing montage (21 PSG channels sweeping mixing weight,
in-ear channel mid-range), runs the complete pipeline, then reports per-subject
NREM overlap between the 21 in-ear scores and the 210 PSG-pair scores, plus
wall time against the runtime budget. The budget is 600 s on a 4-core box and
scales inversely with available cores below that.
"""
import argparse
import json
import os
import time
from pathlib import Path

import numpy as np

from earsim.config import PipelineConfig
from earsim.ingest import parse_manifest
from earsim.pipeline import run_pipeline
from earsim.similarity import overlap_coefficient
from earsim.synth import generate_dataset, graded_mixing_spec


def runtime_budget_seconds(cpus: int) -> float:
    return 600.0 if cpus >= 4 else 600.0 * 4.0 / max(1, cpus)


def per_subject_overlap(similarity: dict, stage: str) -> dict[str, float]:
    rows = [r for r in similarity["scores"] if r["stage"] == stage]
    out: dict[str, float] = {}
    for subject in sorted({r["subject"] for r in rows}):
        inear = [r["score"] for r in rows if r["subject"] == subject and r["kind"] == "inear"]
        psg = [r["score"] for r in rows if r["subject"] == subject and r["kind"] == "psg"]
        if inear and psg:
            out[subject] = overlap_coefficient(inear, psg)
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="working/output directory")
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--jobs", type=int, default=None, help="default min(4, cpu_count)")
    ap.add_argument("--subjects", type=int, default=10)
    ap.add_argument("--duration", type=int, default=14400, help="seconds per subject")
    ap.add_argument("--stage", default="NREM", help="stage for the overlap report")
    args = ap.parse_args()

    cpus = os.cpu_count() or 1
    jobs = args.jobs if args.jobs is not None else min(4, cpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    spec = graded_mixing_spec(subjects=args.subjects, duration_seconds=args.duration)
    t0 = time.perf_counter()
    manifest = generate_dataset(spec, args.seed, out / "data")
    t_synth = time.perf_counter() - t0
    print(f"synth: {args.subjects} subjects x {args.duration} s in {t_synth:.1f} s")

    t1 = time.perf_counter()
    run_pipeline(parse_manifest(manifest), out / "run", PipelineConfig(seed=args.seed, jobs=jobs))
    wall = time.perf_counter() - t1
    budget = runtime_budget_seconds(cpus)
    print(f"pipeline: {wall:.1f} s wall ({jobs} jobs, {cpus} cpus, budget {budget:.0f} s)")

    similarity = json.loads((out / "run" / "similarity.json").read_text())
    overlaps = per_subject_overlap(similarity, args.stage)
    for subject, ov in overlaps.items():
        print(f"  {subject} {args.stage} overlap: {ov:.3f}")
    median = float(np.median(list(overlaps.values()))) if overlaps else float("nan")
    print(f"median {args.stage} overlap: {median:.3f}")

    payload = {
        "seed": args.seed,
        "jobs": jobs,
        "cpus": cpus,
        "subjects": args.subjects,
        "duration_seconds": args.duration,
        "synth_seconds": t_synth,
        "pipeline_seconds": wall,
        "budget_seconds": budget,
        "stage": args.stage,
        "per_subject_overlap": overlaps,
        "median_overlap": median,
    }
    (out / "benchmark.json").write_text(json.dumps(payload, indent=2) + "\n")
    ok = median >= 0.5 and wall < budget
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
