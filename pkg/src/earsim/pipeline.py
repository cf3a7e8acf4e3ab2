"""Batch orchestration: consensus -> feature store -> selection/similarity reports.

Artifact layout under the output directory:

    config.json            effective run configuration
    consensus.json         per-subject hypnogram-track results
    kappa.csv              long-format kappa table
    features/              one .npy per (subject, stage, channel) + index.json
    selection.json         per-pair selection results + per-stage tally
    selection_frequency.csv
    similarity.json        all pair scores, absences, summary tables
    scores_inear.csv / scores_psg.csv
    histograms.json        per (subject, stage, set) score histograms
    stage_tests.json       Mann-Whitney stage comparisons on pooled scores
    run_summary.json       versions, config, timings, counts

Every JSON artifact is schema-validated before it is written, and every write
goes through a temp file + rename so an interrupted run leaves no partial
artifacts. All orchestration is deterministic: worker pools only change
execution order of independent tasks, never the assembly order of results.
The one exception is the `timings` block of run_summary.json, which is
wall-clock by design.
"""
from __future__ import annotations

import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .config import PipelineConfig
from .consensus import SubjectConsensus, consensus_for_subject
from .core import (
    EPOCH_SECONDS,
    FEATURE_NAMES,
    INEAR_CHANNEL,
    STAGE3_ORDER,
    EarsimError,
    Hypnogram,
    Stage3,
)
from .features_freq import freq_feature_matrix
from .features_time import time_feature_matrix
from .ingest import RecordingManifest, load_subject, read_hypnogram
from .selection import SelectionResult, select_for_pair
from .similarity import (
    StageCampaign,
    mann_whitney_u,
    sample_moments,
    score_histogram,
    score_pair,
    stage_campaign,
)

STAGE_NAMES = tuple(s.value for s in STAGE3_ORDER)


# ---------------------------------------------------------------------------
# artifact plumbing

def _schema(name: str) -> dict:
    text = (resources.files("earsim") / "schemas" / f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_payload(payload: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(payload, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise EarsimError(f"internal: {schema_name} payload failed validation: {exc.message}")


def write_text_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json_atomic(path: Path, payload: dict, schema_name: str) -> None:
    text = json.dumps(payload, indent=2, allow_nan=False) + "\n"
    # validate the serialized form: what lands on disk is what is checked
    validate_payload(json.loads(text), schema_name)
    write_text_atomic(path, text)


def save_npy_atomic(path: Path, array: np.ndarray) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.save(fh, array)
    os.replace(tmp, path)


def _pmap(fn, items, jobs: int):
    """Order-preserving map; thread pool when jobs > 1. Tasks must be independent
    so any interleaving assembles to identical results."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _num(x: float):
    """JSON-safe number: NaN becomes null (kappa uses NaN as its undefined flag)."""
    x = float(x)
    return None if math.isnan(x) else x


def check_input_files(subjects: list[RecordingManifest], include_data: bool) -> None:
    missing = []
    for m in subjects:
        for h in m.hypnogram_paths:
            if not h.path.is_file():
                missing.append(str(h.path))
        if include_data:
            for s in m.sources:
                if not s.data_path.is_file():
                    missing.append(str(s.data_path))
    if missing:
        raise EarsimError("missing input files: " + ", ".join(missing))


# ---------------------------------------------------------------------------
# consensus artifacts

def _hypnograms_for(m: RecordingManifest) -> list[Hypnogram]:
    hyps = [read_hypnogram(h.path, m.subject, h.source, h.scorer) for h in m.hypnogram_paths]
    lengths = sorted({len(h.labels) for h in hyps})
    if len(lengths) > 1:
        raise EarsimError(f"subject {m.subject}: hypnogram lengths differ: {lengths}")
    return hyps


def _consensus_entry(res: SubjectConsensus) -> dict:
    first = next(iter(res.consensus.values()))
    entry: dict = {
        "subject": res.subject,
        "n_epochs": len(first.labels),
        "excluded_epochs": list(res.excluded_epochs),
        "soft_agreement": {
            src: {scorer: _num(v) for scorer, v in scores.items()}
            for src, scores in res.soft_scores.items()
        },
        "ranking": {src: list(r) for src, r in res.rankings.items()},
        "consensus": {
            src: {
                "labels": [lab.value if lab is not None else None for lab in c.labels],
                "tie_epochs": [t for t, f in enumerate(c.tie_flags) if f],
            }
            for src, c in res.consensus.items()
        },
        "kappa": {
            "intra": {scorer: _num(v) for scorer, v in res.kappa.intra.items()},
            "inter": {
                src: [
                    {"pair": [a, b], "value": _num(v)}
                    for (a, b), v in pairs.items()
                ]
                for src, pairs in res.kappa.inter.items()
            },
            "missing": list(res.kappa.missing),
        },
    }
    if res.intersection is None:
        entry["intersection"] = None
    else:
        inter = res.intersection
        entry["intersection"] = {
            "labels": [lab.value if lab is not None else None for lab in inter.labels],
            "counts": {s.value: inter.counts[s] for s in STAGE3_ORDER},
            "percentages": {s.value: _num(inter.percentages[s]) for s in STAGE3_ORDER},
            "total": inter.total,
        }
    return entry


def _kappa_csv(entries: list[dict]) -> str:
    lines = ["subject,kind,scorer_or_pair,value"]
    for entry in entries:
        subject = entry["subject"]
        kappa = entry["kappa"]
        for scorer, value in kappa["intra"].items():
            lines.append(f"{subject},intra,{scorer},{'' if value is None else value!r}")
        for src, pairs in kappa["inter"].items():
            for item in pairs:
                a, b = item["pair"]
                value = item["value"]
                lines.append(f"{subject},inter_{src},{a}|{b},{'' if value is None else value!r}")
    return "\n".join(lines) + "\n"


def run_consensus(
    subjects: list[RecordingManifest], out_dir: Path, jobs: int = 1
) -> tuple[dict, list[SubjectConsensus]]:
    """Hypnogram track for every subject; emits consensus.json and kappa.csv."""
    check_input_files(subjects, include_data=False)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _pmap(lambda m: consensus_for_subject(_hypnograms_for(m)), subjects, jobs)
    payload = {"subjects": [_consensus_entry(r) for r in results]}
    write_json_atomic(out_dir / "consensus.json", payload, "consensus")
    write_text_atomic(out_dir / "kappa.csv", _kappa_csv(payload["subjects"]))
    return payload, results


# ---------------------------------------------------------------------------
# feature store

def _stages_in_scope(stage_filter: str | None) -> list[Stage3]:
    if stage_filter is None:
        return list(STAGE3_ORDER)
    if stage_filter not in STAGE_NAMES:
        raise EarsimError(f"unknown stage {stage_filter!r}; expected one of {STAGE_NAMES}")
    return [Stage3(stage_filter)]


def run_features(
    subjects: list[RecordingManifest],
    store_dir: Path,
    cfg: PipelineConfig,
    jobs: int = 1,
    stage_filter: str | None = None,
) -> dict:
    """Extract the 45-feature matrix for every (subject, channel, stage), using
    only epochs in the two sources' consensus intersection."""
    check_input_files(subjects, include_data=True)
    stages = _stages_in_scope(stage_filter)
    store_dir.mkdir(parents=True, exist_ok=True)
    datasets: list[dict] = []
    notices: list[str] = []

    for m in subjects:
        rec = load_subject(m, cfg.preprocess)
        notices.extend(rec.notices)
        cons = consensus_for_subject(list(rec.hypnograms))
        if cons.intersection is None:
            raise EarsimError(
                f"subject {m.subject}: consensus intersection needs both PSG and InEar hypnograms"
            )
        labels = cons.intersection.labels
        T = rec.grid.epoch_count
        stage_rows = {
            s: [t for t, lab in enumerate(labels) if lab is s] for s in stages
        }
        for s in stages:
            if not stage_rows[s]:
                notices.append(f"subject {m.subject}: stage {s.value} omitted (0 intersection epochs)")

        channels = [(name, "PSG", rec.psg_fs, rec.psg[name]) for name in rec.psg]
        channels.append((INEAR_CHANNEL, "InEar", rec.inear_fs, rec.inear[INEAR_CHANNEL]))
        tasks = [
            (name, source, fs, trace, s, stage_rows[s])
            for name, source, fs, trace in channels
            for s in stages
            if stage_rows[s]
        ]
        for s in stages:
            if stage_rows[s]:
                (store_dir / m.subject / s.value).mkdir(parents=True, exist_ok=True)

        def build(task):
            name, source, fs, trace, s, rows = task
            n = int(round(EPOCH_SECONDS * fs))
            epochs = trace.samples[: T * n].reshape(T, n)[rows]
            tmat, tflags = time_feature_matrix(epochs, cfg.time_features)
            fmat, fflags = freq_feature_matrix(epochs, fs, cfg.welch)
            rel = f"{m.subject}/{s.value}/{name}.npy"
            save_npy_atomic(store_dir / rel, np.hstack([tmat, fmat]))
            return {
                "subject": m.subject,
                "stage": s.value,
                "channel": name,
                "source": source,
                "fs": fs,
                "path": rel,
                "n_epochs": len(rows),
                "epoch_indices": rows,
                "flags": {**tflags, **fflags},
            }

        datasets.extend(_pmap(build, tasks, jobs))
        del rec, channels, tasks

    payload = {
        "feature_names": list(FEATURE_NAMES),
        "stage_filter": stage_filter,
        "datasets": datasets,
        "notices": notices,
    }
    write_json_atomic(store_dir / "index.json", payload, "feature_index")
    return payload


# ---------------------------------------------------------------------------
# selection + similarity artifacts

def _load_store(store_dir: Path) -> dict:
    index_path = store_dir / "index.json"
    if not index_path.is_file():
        raise EarsimError(f"feature store index not found: {index_path}")
    payload = json.loads(index_path.read_text())
    validate_payload(payload, "feature_index")
    return payload


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def _selection_entry(
    subject: str, stage: str, pair: tuple[str, str], kind: str, result: SelectionResult
) -> dict:
    return {
        "subject": subject,
        "stage": stage,
        "channel_a": pair[0],
        "channel_b": pair[1],
        "kind": kind,
        "selected": list(result.selected),
        "selected_indices": [int(i) for i in result.selected_indices],
        "k_used": result.k_used,
        "epsilon": None if result.epsilon is None else float(result.epsilon),
        "h_r": float(result.h_r),
        "rr_subset": float(result.rr_subset),
        "rr_full": float(result.rr_full),
        "rr_warning": result.rr_warning,
        "flagged_constant": [FEATURE_NAMES[i] for i in result.flagged_constant],
    }


def run_similarity(
    store_dir: Path,
    out_dir: Path,
    cfg: PipelineConfig,
    jobs: int = 1,
    stage_filter: str | None = None,
    self_pair: bool = False,
) -> dict:
    """Per-(subject, stage) selection and JSD-FSI campaign over a feature store;
    emits selection, similarity, histogram, and stage-test artifacts."""
    index = _load_store(store_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_names = tuple(index["feature_names"])
    stages = _stages_in_scope(stage_filter)
    mode = cfg.selection.mode
    grid_size = cfg.similarity.grid_size

    by_key: dict[tuple[str, str], dict[str, dict]] = {}
    subjects: list[str] = []
    for entry in index["datasets"]:
        key = (entry["subject"], entry["stage"])
        by_key.setdefault(key, {})[entry["channel"]] = entry
        if entry["subject"] not in subjects:
            subjects.append(entry["subject"])

    absences: list[dict] = []
    slots: list[tuple[str, str, dict | None, dict[str, dict]]] = []
    for subject in subjects:
        for s in stages:
            entries = by_key.get((subject, s.value))
            if not entries:
                absences.append(
                    {"subject": subject, "stage": s.value,
                     "reason": "stage omitted in feature store (no intersection epochs)"}
                )
                continue
            inear_entry = entries.get(INEAR_CHANNEL)
            if inear_entry is None:
                absences.append(
                    {"subject": subject, "stage": s.value,
                     "reason": f"in-ear channel {INEAR_CHANNEL} missing from feature store"}
                )
                continue
            if inear_entry["n_epochs"] < 2:
                absences.append(
                    {"subject": subject, "stage": s.value,
                     "reason": f"only {inear_entry['n_epochs']} epoch(s); density estimation needs >= 2"}
                )
                continue
            psg_entries = {c: e for c, e in entries.items() if c != INEAR_CHANNEL}
            if not psg_entries and not self_pair:
                absences.append(
                    {"subject": subject, "stage": s.value,
                     "reason": "no PSG channels in feature store"}
                )
                continue
            slots.append((subject, s.value, inear_entry, psg_entries))

    def run_slot(slot) -> StageCampaign:
        subject, stage, inear_entry, psg_entries = slot
        inear_matrix = np.load(store_dir / inear_entry["path"])
        if self_pair:
            sel = select_for_pair(inear_matrix, inear_matrix, mode, feature_names)
            sc = score_pair(sel, INEAR_CHANNEL, INEAR_CHANNEL, grid_size)
            return StageCampaign(
                subject=subject, stage=stage, inear_scores=(sc,), psg_scores=(),
                selections={(INEAR_CHANNEL, INEAR_CHANNEL): sel.result},
            )
        psg_matrices = {c: np.load(store_dir / e["path"]) for c, e in psg_entries.items()}
        return stage_campaign(
            subject, stage, INEAR_CHANNEL, inear_matrix, psg_matrices, mode, grid_size
        )

    campaigns = _pmap(run_slot, slots, jobs)

    # -- selection.json + tally ---------------------------------------------
    selection_entries: list[dict] = []
    tally: dict[str, dict[str, int]] = {s.value: dict.fromkeys(feature_names, 0) for s in stages}
    n_pairs: dict[str, int] = {s.value: 0 for s in stages}
    for camp in campaigns:
        kinds = {pair: "inear" for pair in list(camp.selections)[: len(camp.inear_scores)]}
        for pair, result in camp.selections.items():
            kind = kinds.get(pair, "psg")
            selection_entries.append(_selection_entry(camp.subject, camp.stage, pair, kind, result))
            n_pairs[camp.stage] += 1
            for name in result.selected:
                tally[camp.stage][name] += 1
    selection_payload = {
        "mode": mode,
        "entries": selection_entries,
        "tally": tally,
        "n_pairs": n_pairs,
    }
    write_json_atomic(out_dir / "selection.json", selection_payload, "selection")

    freq_lines = ["stage,feature,count,fraction"]
    for s in stages:
        total = n_pairs[s.value]
        for name in feature_names:
            count = tally[s.value][name]
            fraction = count / total if total else 0.0
            freq_lines.append(f"{s.value},{name},{count},{fraction!r}")
    write_text_atomic(out_dir / "selection_frequency.csv", "\n".join(freq_lines) + "\n")

    # -- similarity.json + score CSVs ----------------------------------------
    scores: list[dict] = []
    per_subject: list[dict] = []
    for camp in campaigns:
        for kind, pair_scores in (("inear", camp.inear_scores), ("psg", camp.psg_scores)):
            for sc in pair_scores:
                scores.append(
                    {
                        "subject": camp.subject,
                        "stage": camp.stage,
                        "channel_a": sc.channel_a,
                        "channel_b": sc.channel_b,
                        "kind": kind,
                        "score": float(sc.score),
                        "n_features": sc.n_features,
                    }
                )
            if pair_scores:
                mean, sd = _mean_sd([sc.score for sc in pair_scores])
                per_subject.append(
                    {"subject": camp.subject, "stage": camp.stage, "set": kind,
                     "n": len(pair_scores), "mean": mean, "sd": sd}
                )

    # per-PSG-channel mean of in-ear scores across subjects (topography substitute)
    per_channel: list[dict] = []
    channel_order: list[str] = []
    for camp in campaigns:
        for sc in camp.inear_scores:
            if sc.channel_a not in channel_order:
                channel_order.append(sc.channel_a)
    for s in stages:
        for channel in channel_order:
            vals = [
                sc.score
                for camp in campaigns
                if camp.stage == s.value
                for sc in camp.inear_scores
                if sc.channel_a == channel
            ]
            if vals:
                mean, sd = _mean_sd(vals)
                per_channel.append(
                    {"stage": s.value, "channel": channel, "n": len(vals), "mean": mean, "sd": sd}
                )

    similarity_payload = {
        "mode": mode,
        "grid_size": grid_size,
        "self_pair": self_pair,
        "scores": scores,
        "absences": absences,
        "per_subject": per_subject,
        "per_channel": per_channel,
    }
    write_json_atomic(out_dir / "similarity.json", similarity_payload, "similarity")

    for kind, filename in (("inear", "scores_inear.csv"), ("psg", "scores_psg.csv")):
        lines = ["subject,stage,channel_a,channel_b,score,n_features"]
        for row in scores:
            if row["kind"] == kind:
                lines.append(
                    f"{row['subject']},{row['stage']},{row['channel_a']},"
                    f"{row['channel_b']},{row['score']!r},{row['n_features']}"
                )
        write_text_atomic(out_dir / filename, "\n".join(lines) + "\n")

    # -- histograms.json ------------------------------------------------------
    bin_width = cfg.similarity.histogram_bin_width
    hist_entries = []
    for camp in campaigns:
        for kind, pair_scores in (("inear", camp.inear_scores), ("psg", camp.psg_scores)):
            if not pair_scores:
                continue
            hist = score_histogram([sc.score for sc in pair_scores], bin_width)
            hist_entries.append(
                {"subject": camp.subject, "stage": camp.stage, "set": kind,
                 "n": len(pair_scores), "counts": hist["counts"]}
            )
    histograms_payload = {"bin_width": bin_width, "entries": hist_entries}
    write_json_atomic(out_dir / "histograms.json", histograms_payload, "histograms")

    # -- stage_tests.json ------------------------------------------------------
    alpha = cfg.similarity.alpha
    tests: list[dict] = []
    skipped: list[dict] = []
    for kind in ("inear", "psg"):
        pooled: dict[str, list[float]] = {s.value: [] for s in stages}
        for camp in campaigns:
            pair_scores = camp.inear_scores if kind == "inear" else camp.psg_scores
            pooled[camp.stage].extend(sc.score for sc in pair_scores)
        names = [s.value for s in stages]
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                a, b = pooled[names[i]], pooled[names[j]]
                if not a or not b:
                    skipped.append(
                        {"set": kind, "stage_a": names[i], "stage_b": names[j],
                         "reason": "empty score sample"}
                    )
                    continue
                res = mann_whitney_u(a, b)
                tests.append(
                    {
                        "set": kind,
                        "stage_a": names[i],
                        "stage_b": names[j],
                        "n_a": len(a),
                        "n_b": len(b),
                        "u_statistic": float(res.u_statistic),
                        "p_two_sided": float(res.p_two_sided),
                        "p_greater": float(res.p_greater),
                        "p_less": float(res.p_less),
                        "method": res.method,
                        "moments_a": sample_moments(a),
                        "moments_b": sample_moments(b),
                    }
                )
    stage_tests_payload = {"alpha": alpha, "tests": tests, "skipped": skipped}
    write_json_atomic(out_dir / "stage_tests.json", stage_tests_payload, "stage_tests")

    return similarity_payload


# ---------------------------------------------------------------------------
# full pipeline

def serialize_config(cfg: PipelineConfig) -> dict:
    """Effective config as written to the output directory. The parallelism
    degree is execution detail, not configuration: artifacts must be
    byte-identical at any --jobs, so it is not serialized."""
    data = cfg.to_dict()
    data.pop("jobs", None)
    return data


def _versions() -> dict[str, str]:
    out = {"earsim": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "numba", "pyarrow", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def run_pipeline(
    subjects: list[RecordingManifest],
    out_dir: Path,
    cfg: PipelineConfig,
    stage_filter: str | None = None,
) -> dict:
    """consensus -> features -> similarity, then run_summary.json. Errors
    fail fast, prefixed with the phase that raised them."""
    t_start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    check_input_files(subjects, include_data=True)
    write_json_atomic(out_dir / "config.json", serialize_config(cfg), "config")

    timings: dict[str, float] = {}

    def phase(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except EarsimError as exc:
            raise EarsimError(f"{name}: {exc}") from exc
        timings[name] = round(time.perf_counter() - t0, 3)
        return result

    _, _ = phase("consensus", run_consensus, subjects, out_dir, cfg.jobs)
    feat_payload = phase(
        "features", run_features, subjects, out_dir / "features", cfg, cfg.jobs, stage_filter
    )
    sim_payload = phase(
        "similarity", run_similarity, out_dir / "features", out_dir, cfg, cfg.jobs, stage_filter
    )

    timings["total"] = round(time.perf_counter() - t_start, 3)
    counts = {
        "subjects": len(subjects),
        "feature_datasets": len(feat_payload["datasets"]),
        "scores_inear": sum(1 for s in sim_payload["scores"] if s["kind"] == "inear"),
        "scores_psg": sum(1 for s in sim_payload["scores"] if s["kind"] == "psg"),
        "absences": len(sim_payload["absences"]),
    }
    summary = {
        "versions": _versions(),
        "config": serialize_config(cfg),
        "seed": cfg.seed,
        "stage_filter": stage_filter,
        "counts": counts,
        "timings": timings,
    }
    write_json_atomic(out_dir / "run_summary.json", summary, "run_summary")
    return summary
