"""Recording ingest: manifest parsing, channel CSV loading, per-source band-pass
filtering, in-ear amplitude alignment, common-length trimming, hypnogram parsing.

Channel data lives in CSV files (optionally gzipped), one column per channel in
manifest order, one row per sample, with a header row naming the channels. The
sampling rate comes from the manifest, never from the file.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pyarrow.csv as pacsv
from scipy import signal as sps

from .config import PreprocessConfig
from .core import (
    EPOCH_SECONDS,
    INEAR_CHANNEL,
    PSG_CHANNELS,
    EarsimError,
    EpochGrid,
    Hypnogram,
    SignalTrace,
    StageLabel,
)

SOURCE_KINDS = ("PSG", "InEar")


@dataclass(frozen=True)
class SourceEntry:
    kind: str  # "PSG" | "InEar"
    fs: float
    data_path: Path
    channel_names: tuple[str, ...]


@dataclass(frozen=True)
class HypnogramEntry:
    scorer: str
    source: str  # normalized: "psg" | "inear"
    path: Path


@dataclass(frozen=True)
class RecordingManifest:
    subject: str
    sources: tuple[SourceEntry, ...]
    hypnogram_paths: tuple[HypnogramEntry, ...]

    def source(self, kind: str) -> SourceEntry:
        for entry in self.sources:
            if entry.kind == kind:
                return entry
        raise EarsimError(f"subject {self.subject}: manifest has no {kind} source")


def _normalize_source(raw: str, where: str) -> str:
    lowered = str(raw).strip().lower()
    if lowered in ("psg",):
        return "psg"
    if lowered in ("inear", "in-ear", "in_ear"):
        return "inear"
    raise EarsimError(f"{where}: unknown source {raw!r} (expected PSG or InEar)")


def _parse_subject_block(block: dict, manifest_dir: Path, where: str) -> RecordingManifest:
    if not isinstance(block, dict):
        raise EarsimError(f"{where}: subject entry must be an object")
    for key in ("subject", "sources", "hypnogram_paths"):
        if key not in block:
            raise EarsimError(f"{where}: missing required key {key!r}")
    subject = str(block["subject"])
    sources = []
    seen_kinds = set()
    for i, src in enumerate(block["sources"]):
        ctx = f"{where}: subject {subject} sources[{i}]"
        for key in ("kind", "fs", "data_path", "channel_names"):
            if key not in src:
                raise EarsimError(f"{ctx}: missing key {key!r}")
        kind = str(src["kind"])
        if kind not in SOURCE_KINDS:
            raise EarsimError(f"{ctx}: kind must be one of {SOURCE_KINDS}, got {kind!r}")
        if kind in seen_kinds:
            raise EarsimError(f"{ctx}: duplicate source kind {kind!r}")
        seen_kinds.add(kind)
        fs = float(src["fs"])
        if fs <= 0:
            raise EarsimError(f"{ctx}: fs must be positive")
        names = tuple(str(n) for n in src["channel_names"])
        if not names:
            raise EarsimError(f"{ctx}: channel_names is empty")
        if len(set(names)) != len(names):
            raise EarsimError(f"{ctx}: duplicate channel names")
        if kind == "PSG":
            unknown = [n for n in names if n not in PSG_CHANNELS]
            if unknown:
                raise EarsimError(f"{ctx}: channels not in the known montage: {unknown}")
        else:
            if names != (INEAR_CHANNEL,):
                raise EarsimError(f"{ctx}: InEar source must list exactly ['{INEAR_CHANNEL}']")
        sources.append(SourceEntry(kind, fs, manifest_dir / str(src["data_path"]), names))
    hyps = []
    for i, entry in enumerate(block["hypnogram_paths"]):
        ctx = f"{where}: subject {subject} hypnogram_paths[{i}]"
        for key in ("scorer", "source", "path"):
            if key not in entry:
                raise EarsimError(f"{ctx}: missing key {key!r}")
        hyps.append(
            HypnogramEntry(
                scorer=str(entry["scorer"]),
                source=_normalize_source(entry["source"], ctx),
                path=manifest_dir / str(entry["path"]),
            )
        )
    return RecordingManifest(subject, tuple(sources), tuple(hyps))


def parse_manifest(path: str | Path) -> list[RecordingManifest]:
    """Parse a manifest JSON file: either one subject object or {"subjects": [...]}."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise EarsimError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise EarsimError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    where = str(path)
    if isinstance(data, dict) and "subjects" in data:
        blocks = data["subjects"]
        if not isinstance(blocks, list) or not blocks:
            raise EarsimError(f"{where}: 'subjects' must be a non-empty list")
    elif isinstance(data, dict):
        blocks = [data]
    else:
        raise EarsimError(f"{where}: manifest root must be an object")
    manifests = [_parse_subject_block(b, path.parent, where) for b in blocks]
    subjects = [m.subject for m in manifests]
    if len(set(subjects)) != len(subjects):
        raise EarsimError(f"{where}: duplicate subject ids")
    return manifests


def read_channel_csv(path: str | Path, entry: SourceEntry) -> dict[str, SignalTrace]:
    """Read one source's channel matrix. Columns must match the manifest order."""
    path = Path(path)
    if not path.exists():
        raise EarsimError(f"channel data not found: {path}")
    table = pacsv.read_csv(str(path))
    got = tuple(table.column_names)
    if got != entry.channel_names:
        raise EarsimError(
            f"{path}: column header {list(got)} does not match manifest "
            f"channel_names {list(entry.channel_names)}"
        )
    traces = {}
    for name in entry.channel_names:
        col = table.column(name).to_numpy(zero_copy_only=False).astype(np.float64)
        traces[name] = SignalTrace(channel=name, fs=entry.fs, samples=col)
    return traces


def bandpass(trace: SignalTrace, low: float, high: float, order: int = 4) -> SignalTrace:
    """Zero-phase Butterworth band-pass (forward-backward), length-preserving."""
    nyquist = trace.fs / 2.0
    if not (0 < low < high < nyquist):
        raise EarsimError(
            f"channel {trace.channel}: band ({low}, {high}) Hz invalid for fs {trace.fs}"
        )
    if not np.all(np.isfinite(trace.samples)):
        raise EarsimError(f"channel {trace.channel}: non-finite samples")
    sos = sps.butter(order, [low, high], btype="bandpass", fs=trace.fs, output="sos")
    filtered = sps.sosfiltfilt(sos, trace.samples)
    return SignalTrace(channel=trace.channel, fs=trace.fs, samples=filtered)


def rescale_inear(inear: SignalTrace, reference: SignalTrace) -> SignalTrace:
    """Scale the in-ear trace so its whole-trace std matches the PSG reference."""
    std_in = float(np.std(inear.samples))
    std_ref = float(np.std(reference.samples))
    if std_in == 0.0:
        raise EarsimError(f"channel {inear.channel}: zero standard deviation, cannot rescale")
    if std_ref == 0.0:
        raise EarsimError(f"channel {reference.channel}: zero standard deviation reference")
    scaled = inear.samples * (std_ref / std_in)
    return SignalTrace(channel=inear.channel, fs=inear.fs, samples=scaled)


def trim_common(traces: list[SignalTrace]) -> tuple[list[SignalTrace], EpochGrid]:
    """Truncate every trace to the shortest duration, floored to a 30 s multiple."""
    if not traces:
        raise EarsimError("trim_common: no traces")
    min_duration = min(t.samples.shape[0] / t.fs for t in traces)
    epochs = int(math.floor(min_duration / EPOCH_SECONDS))
    if epochs < 1:
        raise EarsimError(
            f"common duration {min_duration:.1f} s is below one {EPOCH_SECONDS} s epoch"
        )
    duration = epochs * EPOCH_SECONDS
    trimmed = []
    for t in traces:
        keep = int(round(duration * t.fs))
        trimmed.append(SignalTrace(channel=t.channel, fs=t.fs, samples=t.samples[:keep]))
    return trimmed, EpochGrid(epoch_count=epochs)


_LABEL_VALUES = {l.value: l for l in StageLabel}


def read_hypnogram(path: str | Path, subject: str, source: str, scorer: str) -> Hypnogram:
    """Parse a hypnogram CSV (header `epoch,label`, 0-based contiguous indices)."""
    path = Path(path)
    if not path.exists():
        raise EarsimError(f"hypnogram not found: {path}")
    labels: list[StageLabel] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EarsimError(f"{path}: empty hypnogram file")
        if [h.strip() for h in header] != ["epoch", "label"]:
            raise EarsimError(f"{path}:1: expected header 'epoch,label', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise EarsimError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            idx_text, label_text = row[0].strip(), row[1].strip()
            try:
                idx = int(idx_text)
            except ValueError:
                raise EarsimError(f"{path}:{lineno}: epoch index {idx_text!r} is not an integer")
            if idx != len(labels):
                raise EarsimError(
                    f"{path}:{lineno}: epoch indices must be 0-based and contiguous "
                    f"(expected {len(labels)}, got {idx})"
                )
            label = _LABEL_VALUES.get(label_text)
            if label is None:
                raise EarsimError(
                    f"{path}:{lineno}: unknown label {label_text!r} "
                    f"(expected one of {sorted(_LABEL_VALUES)})"
                )
            labels.append(label)
    if not labels:
        raise EarsimError(f"{path}: hypnogram has no epochs")
    return Hypnogram(subject=subject, source=source, scorer=scorer, labels=tuple(labels))


@dataclass(frozen=True)
class SubjectRecording:
    """Everything downstream analysis needs for one subject: filtered, rescaled,
    trimmed traces on a shared epoch grid, plus all scorer hypnograms."""

    subject: str
    grid: EpochGrid
    psg: dict[str, SignalTrace]
    psg_fs: float
    inear: dict[str, SignalTrace]
    inear_fs: float
    hypnograms: tuple[Hypnogram, ...]
    notices: tuple[str, ...]


def load_subject(manifest: RecordingManifest, cfg: PreprocessConfig) -> SubjectRecording:
    """Full ingest for one subject.

    Order matters: filter both sources over the whole trace, rescale in-ear against
    the filtered PSG reference, then trim everything to the common epoch grid."""
    notices: list[str] = []
    psg_entry = manifest.source("PSG")
    inear_entry = manifest.source("InEar")
    if cfg.rescale_reference not in psg_entry.channel_names:
        raise EarsimError(
            f"subject {manifest.subject}: rescale reference {cfg.rescale_reference!r} "
            f"not among PSG channels"
        )

    psg_raw = read_channel_csv(psg_entry.data_path, psg_entry)
    inear_raw = read_channel_csv(inear_entry.data_path, inear_entry)

    lo, hi = cfg.psg_band
    psg = {n: bandpass(t, lo, hi, cfg.filter_order) for n, t in psg_raw.items()}
    lo, hi = cfg.inear_band
    inear = {n: bandpass(t, lo, hi, cfg.filter_order) for n, t in inear_raw.items()}
    inear = {
        n: rescale_inear(t, psg[cfg.rescale_reference]) for n, t in inear.items()
    }

    all_traces = list(psg.values()) + list(inear.values())
    trimmed, grid = trim_common(all_traces)
    n_psg = len(psg)
    psg = {t.channel: t for t in trimmed[:n_psg]}
    inear = {t.channel: t for t in trimmed[n_psg:]}

    hypnograms = []
    for entry in manifest.hypnogram_paths:
        hyp = read_hypnogram(entry.path, manifest.subject, entry.source, entry.scorer)
        if len(hyp.labels) > grid.epoch_count:
            notices.append(
                f"subject {manifest.subject} {entry.source} scorer {entry.scorer}: "
                f"hypnogram has {len(hyp.labels)} epochs, truncated to {grid.epoch_count}"
            )
            hyp = Hypnogram(
                subject=hyp.subject,
                source=hyp.source,
                scorer=hyp.scorer,
                labels=hyp.labels[: grid.epoch_count],
            )
        elif len(hyp.labels) < grid.epoch_count:
            raise EarsimError(
                f"{entry.path}: hypnogram covers {len(hyp.labels)} epochs but the "
                f"recording has {grid.epoch_count}"
            )
        hypnograms.append(hyp)

    return SubjectRecording(
        subject=manifest.subject,
        grid=grid,
        psg=psg,
        psg_fs=psg_entry.fs,
        inear=inear,
        inear_fs=inear_entry.fs,
        hypnograms=tuple(hypnograms),
        notices=tuple(notices),
    )
