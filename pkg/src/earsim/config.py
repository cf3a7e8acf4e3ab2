"""Run configuration dataclasses. Everything is JSON-serializable; a run's
effective config is copied verbatim into the output directory."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from .core import EarsimError


@dataclass(frozen=True)
class PreprocessConfig:
    """Band-pass and amplitude alignment applied at ingest time."""

    psg_band: tuple[float, float] = (0.2, 35.0)
    inear_band: tuple[float, float] = (0.5, 35.0)
    filter_order: int = 4
    # PSG derivation whose whole-trace std sets the in-ear rescale target.
    rescale_reference: str = "C3-M2"

    def __post_init__(self) -> None:
        for name, (lo, hi) in (("psg_band", self.psg_band), ("inear_band", self.inear_band)):
            if not (0 < lo < hi):
                raise EarsimError(f"{name} must satisfy 0 < low < high, got ({lo}, {hi})")
        if self.filter_order < 1:
            raise EarsimError(f"filter_order must be >= 1, got {self.filter_order}")


@dataclass(frozen=True)
class WelchConfig:
    window_seconds: float = 5.0
    overlap: float = 0.5
    average: str = "median"  # "median" | "mean"

    def __post_init__(self) -> None:
        if self.window_seconds <= 0:
            raise EarsimError("window_seconds must be positive")
        if not 0 <= self.overlap < 1:
            raise EarsimError("overlap must be in [0, 1)")
        if self.average not in ("median", "mean"):
            raise EarsimError(f"average must be 'median' or 'mean', got {self.average!r}")


@dataclass(frozen=True)
class TimeFeatureConfig:
    entropy_dim: int = 2          # template length d for ApEn/SampEn
    entropy_r_factor: float = 0.2  # tolerance = factor * epoch std
    svd_embed_dim: int = 3
    svd_embed_delay: int = 1
    perm_order: int = 3
    perm_delay: int = 1
    higuchi_kmax: int = 10
    dfa_n_windows: int = 10
    dfa_min_window: int = 4

    def __post_init__(self) -> None:
        if self.entropy_dim < 1:
            raise EarsimError("entropy_dim must be >= 1")
        if self.entropy_r_factor <= 0:
            raise EarsimError("entropy_r_factor must be positive")
        if self.higuchi_kmax < 2:
            raise EarsimError("higuchi_kmax must be >= 2")
        if self.dfa_min_window < 4:
            raise EarsimError("dfa_min_window must be >= 4")


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = "subset"  # "subset" | "all45"

    def __post_init__(self) -> None:
        if self.mode not in ("subset", "all45"):
            raise EarsimError(f"selection mode must be 'subset' or 'all45', got {self.mode!r}")


@dataclass(frozen=True)
class SimilarityConfig:
    grid_size: int = 256
    histogram_bin_width: float = 0.01
    alpha: float = 0.05


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    welch: WelchConfig = field(default_factory=WelchConfig)
    time_features: TimeFeatureConfig = field(default_factory=TimeFeatureConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    jobs: int = 1
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls, data: dict[str, Any], path: str):
    if not isinstance(data, dict):
        raise EarsimError(f"config section {path!r} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise EarsimError(f"unknown config keys in {path!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        f = known[key]
        if dataclasses.is_dataclass(f.type) or f.name in (
            "preprocess", "welch", "time_features", "selection", "similarity",
        ):
            kwargs[key] = _build(_SECTION_TYPES[key], value, f"{path}.{key}")
        elif key in ("psg_band", "inear_band"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "preprocess": PreprocessConfig,
    "welch": WelchConfig,
    "time_features": TimeFeatureConfig,
    "selection": SelectionConfig,
    "similarity": SimilarityConfig,
}


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    return _build(PipelineConfig, data, "config")
