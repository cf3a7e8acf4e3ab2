"""Shared vocabulary: stage labels, channels, traces, epoch grid, feature catalog."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class StageLabel(str, Enum):
    """Seven-value label a scorer can assign to a 30 s epoch."""

    W = "W"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    REM = "REM"
    MOVEMENT = "MOVEMENT"
    UNKNOWN = "UNKNOWN"


class Stage3(str, Enum):
    """Collapsed three-class stage used by all downstream analysis."""

    W = "W"
    NREM = "NREM"
    REM = "REM"


STAGE3_ORDER: tuple[Stage3, ...] = (Stage3.W, Stage3.NREM, Stage3.REM)

_COLLAPSE = {
    StageLabel.W: Stage3.W,
    StageLabel.N1: Stage3.NREM,
    StageLabel.N2: Stage3.NREM,
    StageLabel.N3: Stage3.NREM,
    StageLabel.REM: Stage3.REM,
    StageLabel.MOVEMENT: None,
    StageLabel.UNKNOWN: None,
}


def collapse_label(label: StageLabel) -> Stage3 | None:
    """Collapse a scored label to {W, NREM, REM}; MOVEMENT/UNKNOWN collapse to None."""
    return _COLLAPSE[label]


# The 21 scalp/EOG/mastoid derivations a full montage provides, in canonical order,
# plus the single in-ear channel.
PSG_CHANNELS: tuple[str, ...] = (
    "C3-M2", "F3-M2", "O1-M2", "C4-M1", "F4-M1", "O2-M1",
    "C3", "C4", "F3", "F4", "O1", "O2",
    "E1-M1", "E1-M2", "E2-M1", "E2-M2", "E1", "E2",
    "M1", "M2", "M2-M1",
)
INEAR_CHANNEL = "CH1"

EPOCH_SECONDS = 30


class EarsimError(ValueError):
    """Base error for data/contract violations surfaced to the CLI."""


@dataclass(frozen=True)
class SignalTrace:
    """One channel's samples at a fixed sampling rate. Immutable after construction."""

    channel: str
    fs: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.fs <= 0:
            raise EarsimError(f"channel {self.channel}: fs must be positive, got {self.fs}")
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def samples_per_epoch(self) -> int:
        return int(round(EPOCH_SECONDS * self.fs))

    @property
    def epoch_capacity(self) -> int:
        return self.samples.shape[0] // self.samples_per_epoch


@dataclass(frozen=True)
class EpochGrid:
    """Common epoch axis for one subject after trimming both sources."""

    epoch_count: int
    epoch_seconds: int = EPOCH_SECONDS

    def __post_init__(self) -> None:
        if self.epoch_count < 0:
            raise EarsimError(f"epoch_count must be >= 0, got {self.epoch_count}")


def slice_epoch(trace: SignalTrace, index: int) -> np.ndarray:
    """Samples of epoch `index`: the half-open window [index*30*fs, (index+1)*30*fs)."""
    spe = trace.samples_per_epoch
    lo = index * spe
    hi = lo + spe
    if index < 0 or hi > trace.samples.shape[0]:
        raise EarsimError(
            f"channel {trace.channel}: epoch {index} out of bounds "
            f"(capacity {trace.epoch_capacity})"
        )
    return trace.samples[lo:hi]


@dataclass(frozen=True)
class Hypnogram:
    """One scorer's labels for one subject and source, one per epoch."""

    subject: str
    source: str  # "psg" | "inear"
    scorer: str
    labels: tuple[StageLabel, ...]

    def collapsed(self) -> tuple[Stage3 | None, ...]:
        return tuple(collapse_label(l) for l in self.labels)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    domain: str  # "time" | "freq"
    amplitude_dependent: bool = False


# Catalog order: time-domain block then frequency-domain block, each following the
# reference tables read group-wise (descriptive stats; entropy/complexity;
# Hjorth + fractal dimensions; spectral power/entropy; band ratios; spectral shape).
# Amplitude-dependent features are computed on the max-abs-normalized epoch.
FEATURES: tuple[FeatureSpec, ...] = (
    FeatureSpec("std", "time", True),
    FeatureSpec("skewness", "time"),
    FeatureSpec("kurtosis", "time"),
    FeatureSpec("max_first_derivative", "time", True),
    FeatureSpec("iqr", "time", True),
    FeatureSpec("zero_crossings", "time"),
    FeatureSpec("dfa_exponent", "time"),
    FeatureSpec("approximate_entropy", "time"),
    FeatureSpec("sample_entropy", "time"),
    FeatureSpec("svd_entropy", "time"),
    FeatureSpec("permutation_entropy", "time"),
    FeatureSpec("lempel_ziv", "time"),
    FeatureSpec("hjorth_activity", "time", True),
    FeatureSpec("hjorth_mobility", "time"),
    FeatureSpec("hjorth_complexity", "time"),
    FeatureSpec("katz_fd", "time"),
    FeatureSpec("higuchi_fd", "time"),
    FeatureSpec("petrosian_fd", "time"),
    FeatureSpec("spectral_energy", "freq", True),
    FeatureSpec("rel_delta", "freq"),
    FeatureSpec("rel_theta", "freq"),
    FeatureSpec("rel_alpha", "freq"),
    FeatureSpec("rel_sigma", "freq"),
    FeatureSpec("rel_beta", "freq"),
    FeatureSpec("rel_gamma", "freq"),
    FeatureSpec("spectral_entropy", "freq"),
    FeatureSpec("renyi_entropy", "freq"),
    FeatureSpec("ratio_delta_theta", "freq"),
    FeatureSpec("ratio_delta_sigma", "freq"),
    FeatureSpec("ratio_delta_beta", "freq"),
    FeatureSpec("ratio_delta_alpha", "freq"),
    FeatureSpec("ratio_theta_alpha", "freq"),
    FeatureSpec("ratio_alpha_beta", "freq"),
    FeatureSpec("ratio_delta_alphabeta", "freq"),
    FeatureSpec("ratio_theta_alphabeta", "freq"),
    FeatureSpec("ratio_delta_alphabetatheta", "freq"),
    FeatureSpec("spectral_centroid", "freq"),
    FeatureSpec("spectral_crest", "freq"),
    FeatureSpec("spectral_flatness", "freq"),
    FeatureSpec("spectral_rolloff", "freq"),
    FeatureSpec("spectral_spread", "freq"),
    FeatureSpec("spectral_mean", "freq", True),
    FeatureSpec("spectral_variance", "freq", True),
    FeatureSpec("spectral_skewness", "freq"),
    FeatureSpec("spectral_kurtosis", "freq"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES)
TIME_FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES if f.domain == "time")
FREQ_FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES if f.domain == "freq")
AMPLITUDE_DEPENDENT: frozenset[str] = frozenset(
    f.name for f in FEATURES if f.amplitude_dependent
)
FEATURE_INDEX: dict[str, int] = {name: i for i, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class FeatureDataset:
    """Per-epoch feature rows for one (subject, channel, stage)."""

    subject: str
    channel: str
    stage: Stage3
    matrix: np.ndarray  # shape (n_epochs, 45)
    epoch_indices: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(FEATURE_NAMES):
            raise EarsimError(
                f"feature matrix must be (n, {len(FEATURE_NAMES)}), got {matrix.shape}"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
