"""Synthetic two-source sleep recordings with controllable cross-channel coupling.

Every channel of an epoch is s * shared + (1 - s) * own, where `shared` is one
stage-colored noise realization per (subject, epoch, source) and `own` is white
in-band noise private to the channel. The coupling s is the knob the mixing
experiments sweep: s = 0 gives independent channels, s = 1 clones the shared
process. Stage signatures (W low-amplitude broadband, NREM delta-heavy, REM
theta-heavy) exist to exercise the band features, not to model sleep.

Scorer hypnograms are the true stage script with independent label flips, plus a
small rate of MOVEMENT/UNKNOWN artifacts to exercise the exclusion logic.

Everything derives from one root seed through named SeedSequence spawn keys, so
output is byte-identical per seed regardless of generation order.
"""
from __future__ import annotations

import dataclasses
import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

from .core import EPOCH_SECONDS, INEAR_CHANNEL, PSG_CHANNELS, EarsimError, Stage3

QUANT_STEP = 0.01  # amplitude quantization, keeps CSV text compact

DEFAULT_SCRIPT: tuple[tuple[str, int], ...] = (
    ("W", 120),
    ("NREM", 600),
    ("REM", 240),
)

# 7-value label a scorer writes for each collapsed stage
_EMITTED_LABEL = {Stage3.W: "W", Stage3.NREM: "N2", Stage3.REM: "REM"}

_STAGE_AMPLITUDE = {Stage3.W: 0.5, Stage3.NREM: 1.0, Stage3.REM: 1.0}
_STAGE_BOOST_BAND = {Stage3.W: None, Stage3.NREM: (0.5, 4.0), Stage3.REM: (4.0, 8.0)}
_BOOST = 6.0

_PSG_BAND = (0.2, 35.0)
_INEAR_BAND = (0.5, 35.0)


@dataclass(frozen=True)
class SyntheticSpec:
    subjects: int = 10
    duration_seconds: int = 14400
    psg_fs: float = 256.0
    inear_fs: float = 250.0
    psg_channels: tuple[str, ...] = PSG_CHANNELS
    mixing: float = 0.7
    channel_mixing: dict[str, float] = field(default_factory=dict)
    stage_script: tuple[tuple[str, int], ...] = DEFAULT_SCRIPT
    flip_probability: float = 0.08
    artifact_probability: float = 0.005
    scorers: tuple[str, ...] = ("A", "B", "C")
    psg_amplitude: float = 30.0
    inear_amplitude_factor: float = 0.1
    compress: bool = False

    def __post_init__(self) -> None:
        if self.subjects < 1:
            raise EarsimError("subjects must be >= 1")
        if self.duration_seconds % EPOCH_SECONDS != 0 or self.duration_seconds < EPOCH_SECONDS:
            raise EarsimError(f"duration_seconds must be a positive multiple of {EPOCH_SECONDS}")
        for s in (self.mixing, *self.channel_mixing.values()):
            if not 0.0 <= s <= 1.0:
                raise EarsimError(f"mixing must be in [0, 1], got {s}")
        unknown = set(self.channel_mixing) - set(self.psg_channels) - {INEAR_CHANNEL}
        if unknown:
            raise EarsimError(f"channel_mixing names unknown channels: {sorted(unknown)}")
        if not self.psg_channels:
            raise EarsimError("psg_channels is empty")
        for stage_name, seconds in self.stage_script:
            if stage_name not in Stage3.__members__:
                raise EarsimError(f"stage_script: unknown stage {stage_name!r}")
            if seconds % EPOCH_SECONDS != 0 or seconds <= 0:
                raise EarsimError(
                    f"stage_script durations must be positive multiples of {EPOCH_SECONDS}"
                )
        if not 0.0 <= self.flip_probability <= 1.0:
            raise EarsimError("flip_probability must be in [0, 1]")
        if not 0.0 <= self.artifact_probability <= 1.0:
            raise EarsimError("artifact_probability must be in [0, 1]")
        if len(self.scorers) < 2:
            raise EarsimError("need at least 2 scorers")

    def mixing_for(self, channel: str) -> float:
        return self.channel_mixing.get(channel, self.mixing)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["psg_channels"] = list(self.psg_channels)
        out["stage_script"] = [[s, d] for s, d in self.stage_script]
        out["scorers"] = list(self.scorers)
        return out


def graded_mixing_spec(
    subjects: int = 10,
    duration_seconds: int = 14400,
    low: float = 0.55,
    high: float = 0.85,
    inear_mixing: float = 0.7,
) -> SyntheticSpec:
    """Full-montage benchmark configuration with graded per-channel mixing.

    PSG channels sweep mixing weights `low`..`high` so PSG-PSG pairs differ in
    spectral law the same way cross-source pairs do; the in-ear channel sits
    mid-range at `inear_mixing`. Under uniform mixing the PSG-PSG scores
    collapse into a tight cluster away from the in-ear scores, which makes a
    poor agreement benchmark. Channel data is written gzip-compressed."""
    steps = np.linspace(low, high, len(PSG_CHANNELS))
    mixing = {ch: round(float(s), 3) for ch, s in zip(PSG_CHANNELS, steps)}
    mixing[INEAR_CHANNEL] = inear_mixing
    return SyntheticSpec(
        subjects=subjects,
        duration_seconds=duration_seconds,
        channel_mixing=mixing,
        compress=True,
    )


def spec_from_dict(data: dict) -> SyntheticSpec:
    known = {f.name for f in dataclasses.fields(SyntheticSpec)}
    unknown = set(data) - known
    if unknown:
        raise EarsimError(f"unknown synthetic spec keys: {sorted(unknown)}")
    kwargs = dict(data)
    if "psg_channels" in kwargs:
        kwargs["psg_channels"] = tuple(kwargs["psg_channels"])
    if "stage_script" in kwargs:
        kwargs["stage_script"] = tuple((s, int(d)) for s, d in kwargs["stage_script"])
    if "scorers" in kwargs:
        kwargs["scorers"] = tuple(kwargs["scorers"])
    return SyntheticSpec(**kwargs)


def truth_script(spec: SyntheticSpec) -> list[Stage3]:
    """Per-epoch true stages: the script cycled until the duration is filled."""
    epochs_total = spec.duration_seconds // EPOCH_SECONDS
    stages: list[Stage3] = []
    while len(stages) < epochs_total:
        for stage_name, seconds in spec.stage_script:
            stages.extend([Stage3[stage_name]] * (seconds // EPOCH_SECONDS))
            if len(stages) >= epochs_total:
                break
    return stages[:epochs_total]


# stream codes under each (subject, 0, epoch, code) spawn key
_CODE_PSG_SHARED = 0
_CODE_INEAR_SHARED = 1
_CODE_PSG_OWN_BASE = 2      # + channel index
_CODE_INEAR_OWN = 500


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _colored_noise(rng: np.random.Generator, n: int, fs: float, band: tuple[float, float],
                   boost_band: tuple[float, float] | None) -> np.ndarray:
    """Unit-std noise, band-limited by rfft masking, optionally boosted in one band."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    weight = ((freqs >= band[0]) & (freqs <= band[1])).astype(np.float64)
    if boost_band is not None:
        weight[(freqs >= boost_band[0]) & (freqs < boost_band[1])] *= _BOOST
    shaped = np.fft.irfft(spectrum * weight, n)
    sd = shaped.std()
    if sd == 0.0:  # cannot happen for a real draw; keep the contract anyway
        return shaped
    return shaped / sd


def _generate_source(
    spec: SyntheticSpec,
    seed: int,
    subject_index: int,
    stages: list[Stage3],
    fs: float,
    channels: tuple[str, ...],
    shared_code: int,
    own_code_base: int,
    band: tuple[float, float],
    amplitude: float,
) -> dict[str, np.ndarray]:
    n_epoch = int(round(EPOCH_SECONDS * fs))
    T = len(stages)
    traces = {c: np.empty(T * n_epoch, dtype=np.float64) for c in channels}
    s_values = {c: spec.mixing_for(c) for c in channels}
    for t, stage in enumerate(stages):
        boost = _STAGE_BOOST_BAND[stage]
        amp = amplitude * _STAGE_AMPLITUDE[stage]
        shared = _colored_noise(
            _rng(seed, subject_index, 0, t, shared_code), n_epoch, fs, band, boost
        )
        lo = t * n_epoch
        for ci, channel in enumerate(channels):
            own = _colored_noise(
                _rng(seed, subject_index, 0, t, own_code_base + ci), n_epoch, fs, band, None
            )
            s = s_values[channel]
            traces[channel][lo : lo + n_epoch] = amp * (s * shared + (1.0 - s) * own)
    return traces


def _quantize(x: np.ndarray) -> np.ndarray:
    return (np.round(x / QUANT_STEP) * QUANT_STEP).astype(np.float32)


def _write_channel_csv(path: Path, traces: dict[str, np.ndarray], compress: bool) -> None:
    table = pa.table({name: pa.array(_quantize(t)) for name, t in traces.items()})
    if compress:
        with gzip.open(path, "wb", compresslevel=1) as fh:
            pacsv.write_csv(table, fh)
    else:
        pacsv.write_csv(table, str(path))


def scorer_hypnogram(
    stages: list[Stage3],
    rng: np.random.Generator,
    flip_probability: float,
    artifact_probability: float,
) -> list[str]:
    """One scorer's 7-value labels: truth with independent flips and artifacts."""
    others = {
        Stage3.W: (Stage3.NREM, Stage3.REM),
        Stage3.NREM: (Stage3.W, Stage3.REM),
        Stage3.REM: (Stage3.W, Stage3.NREM),
    }
    labels = []
    for stage in stages:
        roll = rng.random()
        if roll < artifact_probability:
            labels.append("MOVEMENT" if rng.random() < 0.5 else "UNKNOWN")
            continue
        if roll < artifact_probability + flip_probability:
            stage = others[stage][int(rng.integers(2))]
        labels.append(_EMITTED_LABEL[stage])
    return labels


def _write_hypnogram(path: Path, labels: list[str]) -> None:
    lines = ["epoch,label"]
    lines.extend(f"{i},{label}" for i, label in enumerate(labels))
    path.write_text("\n".join(lines) + "\n")


def generate_dataset(spec: SyntheticSpec, seed: int, out_dir: str | Path) -> Path:
    """Write recordings, hypnograms, truth files, and the manifest; returns the
    manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "csv.gz" if spec.compress else "csv"
    subjects_json = []
    for si in range(spec.subjects):
        subject = f"S{si + 1:02d}"
        sdir = out_dir / subject
        sdir.mkdir(exist_ok=True)
        stages = truth_script(spec)

        psg = _generate_source(
            spec, seed, si, stages, spec.psg_fs, spec.psg_channels,
            _CODE_PSG_SHARED, _CODE_PSG_OWN_BASE, _PSG_BAND, spec.psg_amplitude,
        )
        _write_channel_csv(sdir / f"psg.{ext}", psg, spec.compress)
        del psg
        inear = _generate_source(
            spec, seed, si, stages, spec.inear_fs, (INEAR_CHANNEL,),
            _CODE_INEAR_SHARED, _CODE_INEAR_OWN, _INEAR_BAND,
            spec.psg_amplitude * spec.inear_amplitude_factor,
        )
        _write_channel_csv(sdir / f"inear.{ext}", inear, spec.compress)
        del inear

        hypnogram_entries = []
        for src_code, source in ((0, "PSG"), (1, "InEar")):
            for scorer_index, scorer in enumerate(spec.scorers):
                rng = _rng(seed, si, 1, src_code, scorer_index)
                labels = scorer_hypnogram(
                    stages, rng, spec.flip_probability, spec.artifact_probability
                )
                name = f"hyp_{source.lower()}_{scorer}.csv"
                _write_hypnogram(sdir / name, labels)
                hypnogram_entries.append(
                    {"scorer": scorer, "source": source, "path": f"{subject}/{name}"}
                )
        _write_hypnogram(sdir / "truth.csv", [_EMITTED_LABEL[s] for s in stages])

        subjects_json.append(
            {
                "subject": subject,
                "sources": [
                    {
                        "kind": "PSG",
                        "fs": spec.psg_fs,
                        "data_path": f"{subject}/psg.{ext}",
                        "channel_names": list(spec.psg_channels),
                    },
                    {
                        "kind": "InEar",
                        "fs": spec.inear_fs,
                        "data_path": f"{subject}/inear.{ext}",
                        "channel_names": [INEAR_CHANNEL],
                    },
                ],
                "hypnogram_paths": hypnogram_entries,
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps({"subjects": subjects_json}, indent=2) + "\n")
    return manifest_path
