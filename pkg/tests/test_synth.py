import filecmp
import gzip
import json

import numpy as np
import pytest

from earsim.core import Stage3, EarsimError
from earsim.features_freq import band_mask, welch_psd
from earsim.ingest import parse_manifest, read_channel_csv
from earsim.synth import (
    QUANT_STEP,
    SyntheticSpec,
    generate_dataset,
    spec_from_dict,
    truth_script,
)

SMALL = SyntheticSpec(
    subjects=1,
    duration_seconds=900,
    psg_channels=("C3-M2", "F3-M2"),
    stage_script=(("W", 120), ("NREM", 300), ("REM", 120)),
)


def test_spec_validation():
    with pytest.raises(EarsimError, match="subjects"):
        SyntheticSpec(subjects=0)
    with pytest.raises(EarsimError, match="multiple of 30"):
        SyntheticSpec(duration_seconds=100)
    with pytest.raises(EarsimError, match="mixing"):
        SyntheticSpec(mixing=1.5)
    with pytest.raises(EarsimError, match="unknown channels"):
        SyntheticSpec(channel_mixing={"BOGUS": 0.5})
    with pytest.raises(EarsimError, match="unknown stage"):
        SyntheticSpec(stage_script=(("N2", 300),))
    with pytest.raises(EarsimError, match="multiples of 30"):
        SyntheticSpec(stage_script=(("W", 45),))
    with pytest.raises(EarsimError, match="at least 2 scorers"):
        SyntheticSpec(scorers=("A",))
    with pytest.raises(EarsimError, match="flip_probability"):
        SyntheticSpec(flip_probability=-0.1)


def test_spec_dict_round_trip():
    spec = SyntheticSpec(subjects=3, channel_mixing={"C3-M2": 0.9})
    rebuilt = spec_from_dict(json.loads(json.dumps(spec.to_dict())))
    assert rebuilt == spec
    with pytest.raises(EarsimError, match="unknown synthetic spec keys"):
        spec_from_dict({"subject_count": 3})


def test_mixing_for_override():
    spec = SyntheticSpec(channel_mixing={"C3-M2": 0.25})
    assert spec.mixing_for("C3-M2") == 0.25
    assert spec.mixing_for("F3-M2") == 0.7


def test_truth_script_cycles():
    stages = truth_script(SMALL)
    assert len(stages) == 30  # 900 s / 30 s
    assert stages[:4] == [Stage3.W] * 4
    assert stages[4:14] == [Stage3.NREM] * 10
    assert stages[14:18] == [Stage3.REM] * 4
    assert stages[18:22] == [Stage3.W] * 4  # script restarts


def test_generate_dataset_layout(tmp_path):
    manifest_path = generate_dataset(SMALL, seed=5, out_dir=tmp_path)
    manifests = parse_manifest(manifest_path)
    assert len(manifests) == 1
    m = manifests[0]
    assert m.subject == "S01"
    assert (tmp_path / "S01" / "psg.csv").exists()
    assert (tmp_path / "S01" / "inear.csv").exists()
    assert (tmp_path / "S01" / "truth.csv").exists()
    assert len(m.hypnogram_paths) == 6  # 3 scorers x 2 sources

    psg = read_channel_csv(m.source("PSG").data_path, m.source("PSG"))
    assert psg["C3-M2"].samples.shape[0] == int(900 * 256)
    inear = read_channel_csv(m.source("InEar").data_path, m.source("InEar"))
    assert inear["CH1"].samples.shape[0] == int(900 * 250)
    # in-ear amplitude sits well below PSG before ingest rescaling
    assert np.std(inear["CH1"].samples) < 0.5 * np.std(psg["C3-M2"].samples)


def test_generated_values_are_quantized(tmp_path):
    manifest_path = generate_dataset(SMALL, seed=5, out_dir=tmp_path)
    m = parse_manifest(manifest_path)[0]
    samples = read_channel_csv(m.source("PSG").data_path, m.source("PSG"))["C3-M2"].samples
    steps = samples / QUANT_STEP
    np.testing.assert_allclose(steps, np.round(steps), atol=1e-3)


def test_seed_determinism_byte_identical(tmp_path):
    a_dir, b_dir, c_dir = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    generate_dataset(SMALL, seed=9, out_dir=a_dir)
    generate_dataset(SMALL, seed=9, out_dir=b_dir)
    generate_dataset(SMALL, seed=10, out_dir=c_dir)
    files = sorted(p.relative_to(a_dir) for p in a_dir.rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert filecmp.cmp(a_dir / rel, b_dir / rel, shallow=False), rel
    # a different seed must change the recordings
    assert not filecmp.cmp(a_dir / "S01/psg.csv", c_dir / "S01/psg.csv", shallow=False)


def test_no_flips_reproduce_truth(tmp_path):
    spec = SyntheticSpec(
        subjects=1,
        duration_seconds=900,
        psg_channels=("C3-M2",),
        flip_probability=0.0,
        artifact_probability=0.0,
    )
    generate_dataset(spec, seed=1, out_dir=tmp_path)
    truth = (tmp_path / "S01" / "truth.csv").read_text()
    for source in ("psg", "inear"):
        for scorer in ("A", "B", "C"):
            assert (tmp_path / "S01" / f"hyp_{source}_{scorer}.csv").read_text() == truth
    labels = {line.split(",")[1] for line in truth.strip().splitlines()[1:]}
    assert labels <= {"W", "N2", "REM"}  # three-class truth emitted as AASM codes


def test_artifacts_and_flips_appear(tmp_path):
    spec = SyntheticSpec(
        subjects=1,
        duration_seconds=3600,
        psg_channels=("C3-M2",),
        flip_probability=0.3,
        artifact_probability=0.2,
    )
    generate_dataset(spec, seed=2, out_dir=tmp_path)
    text = (tmp_path / "S01" / "hyp_psg_A.csv").read_text()
    labels = [line.split(",")[1] for line in text.strip().splitlines()[1:]]
    assert any(l in ("MOVEMENT", "UNKNOWN") for l in labels)
    truth = [
        line.split(",")[1]
        for line in (tmp_path / "S01" / "truth.csv").read_text().strip().splitlines()[1:]
    ]
    disagreements = sum(
        1 for t, l in zip(truth, labels) if l not in ("MOVEMENT", "UNKNOWN") and l != t
    )
    assert disagreements > 0


def test_compress_writes_gzip(tmp_path):
    spec = SyntheticSpec(
        subjects=1, duration_seconds=300, psg_channels=("C3-M2",),
        stage_script=(("NREM", 300),), compress=True,
    )
    manifest_path = generate_dataset(spec, seed=3, out_dir=tmp_path)
    gz = tmp_path / "S01" / "psg.csv.gz"
    assert gz.exists()
    with gzip.open(gz, "rt") as fh:
        assert fh.readline().strip().strip('"') == "C3-M2"
    m = parse_manifest(manifest_path)[0]
    assert read_channel_csv(m.source("PSG").data_path, m.source("PSG"))


def test_stage_signatures_in_spectrum(tmp_path):
    spec = SyntheticSpec(
        subjects=1,
        duration_seconds=1800,
        psg_channels=("C3-M2",),
        stage_script=(("NREM", 900), ("REM", 900)),
        flip_probability=0.0,
        artifact_probability=0.0,
    )
    manifest_path = generate_dataset(spec, seed=4, out_dir=tmp_path)
    m = parse_manifest(manifest_path)[0]
    trace = read_channel_csv(m.source("PSG").data_path, m.source("PSG"))["C3-M2"]
    n = int(30 * 256)

    def band_fraction(epoch_idx, lo, hi):
        x = trace.samples[epoch_idx * n : (epoch_idx + 1) * n]
        est = welch_psd(x, 256.0)
        total = est.density[(est.freqs >= 0.5) & (est.freqs <= 35.0)].sum()
        return est.density[band_mask(est.freqs, lo, hi)].sum() / total

    nrem_delta = np.median([band_fraction(e, 0.5, 4.0) for e in range(0, 10)])
    rem_delta = np.median([band_fraction(e, 0.5, 4.0) for e in range(30, 40)])
    rem_theta = np.median([band_fraction(e, 4.0, 8.0) for e in range(30, 40)])
    nrem_theta = np.median([band_fraction(e, 4.0, 8.0) for e in range(0, 10)])
    assert nrem_delta > 2 * rem_delta
    assert rem_theta > 2 * nrem_theta
