import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from earsim.core import FEATURE_NAMES, EarsimError
from earsim.similarity import (
    MannWhitneyResult,
    PdfEstimate,
    estimate_pdf,
    jsd,
    jsd_fsi,
    mann_whitney_u,
    overlap_coefficient,
    pair_grid,
    sample_moments,
    score_histogram,
    score_pair,
    silverman_bandwidth,
    stage_campaign,
)
from earsim.selection import select_for_pair
from oracles import mann_whitney_exact_oracle


def test_silverman_bandwidth_formula():
    rng = np.random.default_rng(30)
    v = rng.normal(size=500)
    sd = np.std(v)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    expected = 0.9 * min(sd, iqr / 1.349) * 500 ** (-0.2)
    assert silverman_bandwidth(v) == pytest.approx(expected, rel=1e-12)

    spiky = np.array([0.0] * 7 + [10.0])  # zero IQR, nonzero SD
    sd = np.std(spiky)
    assert silverman_bandwidth(spiky) == pytest.approx(0.9 * sd * 8 ** (-0.2))
    assert silverman_bandwidth(np.ones(10)) == 0.0


def test_pair_grid_covers_both_samples():
    a = np.array([0.0, 1.0, 2.0])
    b = np.array([5.0, 6.0, 7.0])
    grid, h_a, h_b = pair_grid(a, b, 64)
    h = max(h_a, h_b)
    assert grid.shape == (64,)
    assert grid[0] == pytest.approx(0.0 - 3 * h)
    assert grid[-1] == pytest.approx(7.0 + 3 * h)
    # two constant equal samples still get a nonempty window
    g2, _, _ = pair_grid(np.zeros(3), np.zeros(3), 16)
    assert g2[0] < 0.0 < g2[-1]


def test_estimate_pdf_matches_scipy_kde():
    rng = np.random.default_rng(31)
    for _ in range(5):
        v = rng.normal(loc=rng.uniform(-2, 2), scale=rng.uniform(0.5, 3), size=200)
        grid, h, _ = pair_grid(v, v, 256)
        est = estimate_pdf(v, grid, h)
        assert est.mass.sum() == pytest.approx(1.0, abs=1e-12)
        ref = stats.gaussian_kde(v, bw_method=h / np.std(v, ddof=1))(grid)
        np.testing.assert_allclose(est.mass, ref / ref.sum(), atol=1e-12)


def test_estimate_pdf_moments_recovered():
    rng = np.random.default_rng(32)
    v = rng.normal(loc=1.5, scale=1.0, size=1000)
    grid, h, _ = pair_grid(v, v, 512)
    est = estimate_pdf(v, grid, h)
    mean = float((est.grid * est.mass).sum())
    var = float(((est.grid - mean) ** 2 * est.mass).sum())
    assert mean == pytest.approx(v.mean(), abs=0.1)
    # KDE smoothing inflates variance by h^2
    assert var == pytest.approx(v.var() + h * h, abs=0.1)


def test_estimate_pdf_degenerate_spike():
    grid = np.linspace(-1, 1, 21)
    est = estimate_pdf(np.full(5, 0.11), grid)
    assert est.degenerate
    assert est.mass.sum() == 1.0
    assert est.mass[np.argmin(np.abs(grid - 0.11))] == 1.0

    with pytest.raises(EarsimError, match=">= 2 values"):
        estimate_pdf(np.array([1.0]), grid)
    with pytest.raises(EarsimError, match="non-finite"):
        estimate_pdf(np.array([1.0, np.nan]), grid)


def test_jsd_identities():
    grid = np.linspace(0, 1, 100)
    mass = np.full(100, 0.01)
    p = PdfEstimate(grid=grid, mass=mass)
    assert jsd(p, p) == 0.0

    spike_a = np.zeros(100)
    spike_a[10] = 1.0
    spike_b = np.zeros(100)
    spike_b[90] = 1.0
    assert jsd(
        PdfEstimate(grid=grid, mass=spike_a), PdfEstimate(grid=grid, mass=spike_b)
    ) == pytest.approx(1.0, abs=1e-12)

    with pytest.raises(EarsimError, match="grid mismatch"):
        jsd(p, PdfEstimate(grid=grid + 1.0, mass=mass))


def test_jsd_grows_with_separation():
    rng = np.random.default_rng(33)
    base = rng.normal(size=400)
    values = []
    for d in (0.0, 1.0, 2.0, 4.0):
        shifted = base + d
        grid, h_a, h_b = pair_grid(base, shifted, 256)
        p = estimate_pdf(base, grid, h_a)
        q = estimate_pdf(shifted, grid, h_b)
        values.append(jsd(p, q))
    assert values[0] == pytest.approx(0.0, abs=1e-9)
    assert values[0] < values[1] < values[2] < values[3]
    assert values[3] > 0.9


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_jsd_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 128))
    grid = np.linspace(-1, 1, n)
    pm = np.abs(rng.normal(size=n)) + (rng.random(n) < 0.3)  # some near-zero mass
    qm = np.abs(rng.normal(size=n))
    if rng.random() < 0.2:
        qm[: n // 2] = 0.0
    pm /= pm.sum()
    qm /= qm.sum()
    p = PdfEstimate(grid=grid, mass=pm)
    q = PdfEstimate(grid=grid, mass=qm)
    d = jsd(p, q)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(jsd(q, p), abs=1e-12)


def test_score_pair_self_is_one():
    rng = np.random.default_rng(34)
    a = rng.normal(size=(40, 45))
    sel = select_for_pair(a, a.copy(), mode="subset")
    score = score_pair(sel, "X", "X")
    assert score.score == pytest.approx(1.0, abs=1e-12)
    assert all(s == pytest.approx(1.0, abs=1e-12) for s in score.per_feature)
    assert score.n_features == len(sel.result.selected)


def test_jsd_fsi_affine_invariance():
    rng = np.random.default_rng(35)
    a = rng.normal(size=(30, 45))
    b = rng.normal(size=(35, 45)) + 0.4
    scale = rng.uniform(0.5, 20.0, size=45)
    shift = rng.uniform(-5.0, 5.0, size=45)
    raw = jsd_fsi(a, b)
    mapped = jsd_fsi(a * scale + shift, b * scale + shift)
    assert mapped.score == pytest.approx(raw.score, abs=1e-6)
    assert mapped.n_features == raw.n_features


def test_jsd_fsi_all45_mode():
    rng = np.random.default_rng(36)
    a = rng.normal(size=(20, 45))
    b = rng.normal(size=(20, 45))
    score = jsd_fsi(a, b, mode="all45")
    assert score.n_features == 45
    assert 0.0 <= score.score <= 1.0


def test_stage_campaign_pair_layout():
    rng = np.random.default_rng(37)
    psg = {name: rng.normal(size=(25, 45)) for name in ("C3-M2", "F3-M2", "O1-M2")}
    inear = rng.normal(size=(25, 45))
    camp = stage_campaign("S00", "NREM", "CH1", inear, psg)
    assert camp.subject == "S00" and camp.stage == "NREM"
    assert [s.channel_b for s in camp.inear_scores] == ["CH1"] * 3
    assert [s.channel_a for s in camp.inear_scores] == list(psg)
    assert len(camp.psg_scores) == 3  # C(3, 2)
    assert len(camp.selections) == 6
    for s in list(camp.inear_scores) + list(camp.psg_scores):
        assert 0.0 <= s.score <= 1.0
        assert camp.selections[(s.channel_a, s.channel_b)].selected


def test_mann_whitney_separated_triples():
    res = mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert res.method == "exact"
    assert res.u_statistic == 0.0
    assert res.p_less == pytest.approx(1 / 20)  # C(6,3) = 20 assignments
    assert res.p_two_sided == pytest.approx(2 / 20)
    assert res.p_greater == pytest.approx(1.0)


def test_mann_whitney_identical_samples():
    v = [1.0, 2.0, 3.0, 4.0]
    res = mann_whitney_u(v, list(v))
    assert res.method == "exact"
    assert res.p_two_sided >= 0.9


def test_mann_whitney_exact_matches_oracle():
    rng = np.random.default_rng(38)
    for _ in range(25):
        n1 = int(rng.integers(2, 7))
        n2 = int(rng.integers(2, 7))
        a = rng.integers(0, 5, size=n1).astype(float)  # heavy ties
        b = rng.integers(0, 5, size=n2).astype(float)
        res = mann_whitney_u(a, b)
        assert res.method == "exact"
        u_ref, p2_ref, pg_ref, pl_ref = mann_whitney_exact_oracle(a, b)
        assert res.u_statistic == pytest.approx(u_ref, abs=1e-12)
        assert res.p_two_sided == pytest.approx(p2_ref, abs=1e-12)
        assert res.p_greater == pytest.approx(pg_ref, abs=1e-12)
        assert res.p_less == pytest.approx(pl_ref, abs=1e-12)


def test_mann_whitney_asymptotic_matches_scipy():
    rng = np.random.default_rng(39)
    for make in (
        lambda: (rng.normal(size=30), rng.normal(size=25) + 0.3),
        lambda: (np.round(rng.normal(size=40), 1), np.round(rng.normal(size=35), 1)),
    ):
        a, b = make()
        res = mann_whitney_u(a, b)
        assert res.method == "asymptotic"
        for alt, mine in (
            ("two-sided", res.p_two_sided),
            ("greater", res.p_greater),
            ("less", res.p_less),
        ):
            ref = stats.mannwhitneyu(
                a, b, alternative=alt, method="asymptotic", use_continuity=True
            )
            assert res.u_statistic == ref.statistic
            assert mine == pytest.approx(ref.pvalue, abs=1e-12)


def test_mann_whitney_detects_large_shift():
    rng = np.random.default_rng(40)
    a = rng.normal(size=50)
    b = rng.normal(size=50) + 2.0
    res = mann_whitney_u(a, b)
    assert res.method == "asymptotic"
    assert res.p_two_sided < 1e-3
    assert res.p_less < 1e-3 < res.p_greater


def test_mann_whitney_forced_exact_and_errors():
    rng = np.random.default_rng(41)
    a = rng.normal(size=9)
    b = rng.normal(size=4)
    assert mann_whitney_u(a, b).method == "asymptotic"
    forced = mann_whitney_u(a, b, exact=True)
    assert forced.method == "exact"
    u_ref, p2_ref, _, _ = mann_whitney_exact_oracle(a, b)
    assert forced.p_two_sided == pytest.approx(p2_ref, abs=1e-12)
    with pytest.raises(EarsimError, match="empty sample"):
        mann_whitney_u([], [1.0])


def test_sample_moments():
    rng = np.random.default_rng(42)
    v = rng.normal(size=5000)
    m = sample_moments(v)
    assert set(m) == {"n", "mean", "skewness", "kurtosis"}
    assert m["n"] == 5000.0
    assert m["mean"] == pytest.approx(0.0, abs=0.05)
    assert m["skewness"] == pytest.approx(0.0, abs=0.15)
    assert m["kurtosis"] == pytest.approx(0.0, abs=0.3)
    flat = sample_moments(np.ones(10))
    assert flat["skewness"] == 0.0 and flat["kurtosis"] == 0.0


def test_overlap_coefficient():
    rng = np.random.default_rng(43)
    v = rng.normal(size=400)
    assert overlap_coefficient(v, v) == pytest.approx(1.0)
    assert overlap_coefficient(v, v + 100.0) == 0.0
    assert overlap_coefficient(np.zeros(5), np.zeros(5)) == 1.0
    half = overlap_coefficient(rng.normal(size=4000), rng.normal(size=4000) + 1.0)
    assert 0.3 < half < 0.9


def test_score_histogram_layout():
    hist = score_histogram([0.0, 0.005, 0.5, 0.999, 1.0])
    assert len(hist["bin_edges"]) == 101
    assert len(hist["counts"]) == 100
    assert sum(hist["counts"]) == 5
    assert hist["counts"][0] == 2  # 0.0 and 0.005
    assert hist["counts"][-1] == 2  # 0.999 and the closed 1.0 edge
    assert hist["counts"][50] == 1
