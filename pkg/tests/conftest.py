import pytest

from earsim.config import PipelineConfig
from earsim.ingest import parse_manifest
from earsim.pipeline import run_pipeline
from earsim.synth import SyntheticSpec, generate_dataset

# small enough to keep the suite fast, rich enough to hit every code path:
# two subjects, three PSG channels, all three stages, flips and artifacts on
TINY_SPEC = SyntheticSpec(
    subjects=2,
    duration_seconds=1800,
    psg_channels=("C3-M2", "F3-M2", "O1-M2"),
    stage_script=(("W", 120), ("NREM", 300), ("REM", 180)),
    flip_probability=0.1,
    artifact_probability=0.02,
)
TINY_SEED = 7


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Manifest path of a small synthetic recording set, built once per session."""
    out = tmp_path_factory.mktemp("tiny_data")
    return generate_dataset(TINY_SPEC, TINY_SEED, out)


@pytest.fixture(scope="session")
def tiny_run(tiny_dataset, tmp_path_factory):
    """(out_dir, run summary) of a full pipeline run over the tiny dataset."""
    out = tmp_path_factory.mktemp("tiny_run")
    subjects = parse_manifest(tiny_dataset)
    summary = run_pipeline(subjects, out, PipelineConfig())
    return out, summary


@pytest.fixture(scope="session")
def tiny_run_jobs3(tiny_dataset, tmp_path_factory):
    """Same pipeline as tiny_run but with a 3-worker pool, for determinism checks."""
    out = tmp_path_factory.mktemp("tiny_run_j3")
    subjects = parse_manifest(tiny_dataset)
    summary = run_pipeline(subjects, out, PipelineConfig(jobs=3))
    return out, summary
