import dataclasses
import json

import pytest

from earsim.config import (
    PipelineConfig,
    PreprocessConfig,
    SelectionConfig,
    TimeFeatureConfig,
    WelchConfig,
    config_from_dict,
)
from earsim.core import EarsimError


def test_defaults_round_trip():
    cfg = PipelineConfig()
    data = cfg.to_dict()
    rebuilt = config_from_dict(json.loads(json.dumps(data)))
    assert rebuilt == cfg


def test_partial_dict_keeps_defaults():
    cfg = config_from_dict({"welch": {"average": "mean"}, "seed": 42})
    assert cfg.welch.average == "mean"
    assert cfg.welch.window_seconds == 5.0
    assert cfg.seed == 42
    assert cfg.preprocess == PreprocessConfig()


def test_unknown_key_rejected():
    with pytest.raises(EarsimError, match="unknown config keys"):
        config_from_dict({"welch": {"avg": "mean"}})
    with pytest.raises(EarsimError, match="unknown config keys"):
        config_from_dict({"wlech": {}})


def test_band_validation():
    with pytest.raises(EarsimError):
        PreprocessConfig(psg_band=(35.0, 0.2))
    with pytest.raises(EarsimError):
        PreprocessConfig(inear_band=(0.0, 35.0))


def test_welch_validation():
    with pytest.raises(EarsimError):
        WelchConfig(average="max")
    with pytest.raises(EarsimError):
        WelchConfig(overlap=1.0)
    with pytest.raises(EarsimError):
        WelchConfig(window_seconds=0)


def test_selection_mode_validation():
    assert SelectionConfig(mode="all45").mode == "all45"
    with pytest.raises(EarsimError):
        SelectionConfig(mode="all")


def test_time_feature_validation():
    with pytest.raises(EarsimError):
        TimeFeatureConfig(entropy_dim=0)
    with pytest.raises(EarsimError):
        TimeFeatureConfig(dfa_min_window=3)
    with pytest.raises(EarsimError):
        TimeFeatureConfig(entropy_r_factor=0.0)


def test_configs_are_frozen():
    cfg = PipelineConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.seed = 1
