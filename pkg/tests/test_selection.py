import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from earsim.core import FEATURE_NAMES, EarsimError
from earsim.selection import (
    choose_k,
    fsfs_select,
    mici,
    mici_matrix,
    redundancy_rate,
    representation_entropy,
    select_for_pair,
    zscore_pair,
)


def test_zscore_pair_pools_moments():
    a = np.array([[1.0, 5.0], [3.0, 5.0]])
    b = np.array([[5.0, 5.0], [7.0, 5.0]])
    za, zb, flagged = zscore_pair(a, b)
    pooled = np.concatenate([np.concatenate([a, b])])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    np.testing.assert_allclose(za[:, 0], (a[:, 0] - mean[0]) / std[0])
    assert flagged == [1]
    assert np.all(za[:, 1] == 0.0) and np.all(zb[:, 1] == 0.0)
    merged = np.concatenate([za, zb])
    assert merged[:, 0].mean() == pytest.approx(0.0, abs=1e-12)
    assert merged[:, 0].std() == pytest.approx(1.0)

    with pytest.raises(EarsimError, match="shape mismatch"):
        zscore_pair(a, b[:, :1])


def test_mici_identities():
    x = np.array([1.0, -1.0, 1.0, -1.0])
    # affine image: squared correlation 1 -> distance 0
    assert mici(x, 2.0 * x + 3.0) == pytest.approx(0.0, abs=1e-12)
    assert mici(x, -0.5 * x) == pytest.approx(0.0, abs=1e-12)
    # orthogonal, equal variance -> maximal distance 0.5
    y = np.array([1.0, 1.0, -1.0, -1.0])
    assert mici(x, y) == pytest.approx(0.5, abs=1e-12)
    # both constant counts as redundant
    assert mici(np.ones(4), np.full(4, 2.0)) == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_mici_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    x = rng.normal(scale=rng.choice([0.1, 1.0, 10.0]), size=n)
    y = rng.normal(scale=rng.choice([0.1, 1.0, 10.0]), size=n)
    d_xy = mici(x, y)
    assert d_xy == pytest.approx(mici(y, x), abs=1e-12)
    assert -1e-12 <= d_xy <= 0.5 + 1e-12


def test_mici_matrix_matches_scalar():
    rng = np.random.default_rng(20)
    m = rng.normal(size=(40, 8))
    m[:, 3] = m[:, 0] * 1.5  # one redundant pair
    dist = mici_matrix(m)
    assert dist.shape == (8, 8)
    assert np.all(np.diag(dist) == 0.0)
    np.testing.assert_allclose(dist, dist.T, atol=1e-15)
    for i in range(8):
        for j in range(i + 1, 8):
            assert dist[i, j] == pytest.approx(mici(m[:, i], m[:, j]), abs=1e-12)
    assert dist[0, 3] == pytest.approx(0.0, abs=1e-12)


def test_representation_entropy_identities():
    # hadamard columns minus the all-ones one: exact identity covariance
    H = hadamard(8).astype(float)[:, 1:]
    assert representation_entropy(H) == pytest.approx(np.log(7), abs=1e-12)
    # rank one -> single nonzero eigenvalue -> zero entropy
    base = np.random.default_rng(21).normal(size=16)
    rank1 = np.column_stack([base, 2 * base, -base])
    assert representation_entropy(rank1) == pytest.approx(0.0, abs=1e-12)
    assert representation_entropy(np.zeros((4, 3))) == 0.0


def test_redundancy_rate_extremes():
    base = np.random.default_rng(22).normal(size=30)
    dup = np.column_stack([base, 2 * base, -base, base + 1])
    assert redundancy_rate(dup) == pytest.approx(0.5, abs=1e-12)
    assert redundancy_rate(base[:, None]) == 0.0
    # constant columns contribute nothing
    with_const = np.column_stack([base, np.ones(30)])
    assert redundancy_rate(with_const) == 0.0


def test_fsfs_discards_ties_at_radius():
    dist = np.array(
        [
            [0.0, 0.1, 0.1],
            [0.1, 0.0, 0.5],
            [0.1, 0.5, 0.0],
        ]
    )
    selected, k_init, epsilon = fsfs_select(dist, 1)
    assert selected == [0]  # 1 and 2 sit exactly at the radius: both discarded
    assert k_init == 1 and epsilon == pytest.approx(0.1)


def test_fsfs_k_decrements_to_exhaustion():
    # tight triple {0,1,2}, loose pair {3,4}, far apart blocks
    dist = np.full((5, 5), 1.0)
    np.fill_diagonal(dist, 0.0)
    for i in (0, 1, 2):
        for j in (0, 1, 2):
            if i != j:
                dist[i, j] = 0.01
    dist[3, 4] = dist[4, 3] = 0.3
    selected, k_init, epsilon = fsfs_select(dist, 2)
    assert selected == [0, 3, 4]  # second round exceeds epsilon, k runs out
    assert k_init == 2 and epsilon == pytest.approx(0.01)


def test_fsfs_edge_cases():
    assert fsfs_select(np.zeros((1, 1)), 3) == ([0], 3, None)
    dist = np.array([[0.0, 0.2], [0.2, 0.0]])
    assert fsfs_select(dist, 0) == ([0, 1], 0, None)


def _block_matrix(rng, n_blocks=4, copies=3, rows=60):
    cols = []
    for _ in range(n_blocks):
        base = rng.normal(size=rows)
        for c in range(copies):
            cols.append(base * (c + 1.0))  # exact affine copies: MICI 0
    return np.column_stack(cols)


def test_block_duplicates_leave_one_survivor_per_block():
    rng = np.random.default_rng(23)
    n_blocks, copies = 4, 3
    m = _block_matrix(rng, n_blocks, copies)
    names = tuple(f"f{i}" for i in range(m.shape[1]))
    result = choose_k(m, names)
    assert len(result.selected) == n_blocks
    blocks_hit = {i // copies for i in result.selected_indices}
    assert len(blocks_hit) == n_blocks
    assert result.h_r == pytest.approx(
        representation_entropy(m[:, result.selected_indices]), abs=1e-12
    )


def test_choose_k_maximizes_entropy_with_smallest_k():
    rng = np.random.default_rng(24)
    for _ in range(10):
        m = rng.normal(size=(50, 9))
        m[:, 4] = m[:, 1] * 0.5  # plant redundancy
        names = tuple(f"f{i}" for i in range(9))
        result = choose_k(m, names)
        dist = mici_matrix(m)
        achieved = []
        for k in range(1, 9):
            sel, _, _ = fsfs_select(dist, k)
            achieved.append((k, representation_entropy(m[:, sel])))
        best_h = max(h for _, h in achieved)
        assert result.h_r >= best_h - 1e-12
        smallest_best = min(k for k, h in achieved if h >= best_h - 1e-12)
        assert result.k_used == smallest_best


def test_redundancy_warning_flag_is_consistent():
    rng = np.random.default_rng(25)
    names = tuple(f"f{i}" for i in range(10))
    for _ in range(50):
        m = rng.normal(size=(40, 10))
        result = choose_k(m, names)
        assert result.rr_warning == (result.rr_subset > result.rr_full + 1e-12)
        assert result.rr_subset <= result.rr_full + 1e-12 or result.rr_warning


def test_redundant_matrices_usually_improve():
    # with planted duplicate columns the pruned subset should beat the full set
    rng = np.random.default_rng(27)
    names = tuple(f"f{i}" for i in range(10))
    improved = 0
    for _ in range(50):
        m = rng.normal(size=(40, 10))
        m[:, 5] = m[:, 0]
        m[:, 6] = -2.0 * m[:, 1]
        result = choose_k(m, names)
        improved += result.rr_subset <= result.rr_full + 1e-12
    assert improved >= 45


def test_select_for_pair_modes():
    rng = np.random.default_rng(26)
    a = rng.normal(size=(30, 45))
    b = rng.normal(size=(25, 45))
    a[:, 7] = a[:, 2]
    b[:, 7] = b[:, 2]
    a[:, 11] = 0.0
    b[:, 11] = 0.0

    subset = select_for_pair(a, b, mode="subset")
    assert subset.result.flagged_constant == (11,)
    assert 0 < len(subset.result.selected) <= 45
    assert set(subset.result.selected) <= set(FEATURE_NAMES)
    assert subset.z_a.shape == a.shape and subset.z_b.shape == b.shape

    full = select_for_pair(a, b, mode="all45")
    assert full.result.selected == FEATURE_NAMES
    assert full.result.k_used == 0 and full.result.epsilon is None
    assert full.result.rr_subset == full.result.rr_full
    assert not full.result.rr_warning

    with pytest.raises(EarsimError, match="unknown selection mode"):
        select_for_pair(a, b, mode="best")


def test_choose_k_input_guards():
    with pytest.raises(EarsimError, match="at least 2 features"):
        choose_k(np.zeros((10, 1)), ("f0",))
    with pytest.raises(EarsimError, match="feature names"):
        choose_k(np.zeros((10, 3)), ("f0",))
