"""Redundancy-based feature selection for a dataset pair.

Pipeline per (pair, stage): pooled z-scoring, pairwise normalized-MICI distances,
forward sequential selection driven by k-nearest-neighbor compactness, with the
neighbor count chosen by representation entropy and validated by redundancy rate.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import EarsimError, FEATURE_NAMES


def zscore_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Z-score both matrices with mean/std pooled over their concatenated rows.

    Zero-std columns become all zeros and their indices are returned as flagged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise EarsimError(f"zscore_pair shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] + b.shape[0] < 2:
        raise EarsimError("zscore_pair needs at least 2 pooled rows")
    pooled = np.concatenate([a, b], axis=0)
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    flagged = [int(i) for i in np.flatnonzero(std == 0)]
    safe = np.where(std > 0, std, 1.0)
    za = (a - mean) / safe
    zb = (b - mean) / safe
    za[:, std == 0] = 0.0
    zb[:, std == 0] = 0.0
    return za, zb, flagged


def mici(x: np.ndarray, y: np.ndarray) -> float:
    """Normalized maximal-information-compression distance between two columns.

    The smaller eigenvalue of the 2x2 covariance of (x, y), divided by the sum of
    the variances; 0 for perfectly correlated columns, 0.5 for uncorrelated
    equal-variance ones. Two constant columns count as perfectly redundant (0)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.shape[0] < 2:
        raise EarsimError("mici needs two equal-length columns with >= 2 rows")
    vx = float(np.var(x))
    vy = float(np.var(y))
    total = vx + vy
    if total == 0.0:
        return 0.0
    cov = float(np.mean((x - x.mean()) * (y - y.mean())))
    lam2 = 0.5 * (total - np.sqrt((vx - vy) ** 2 + 4.0 * cov * cov))
    return float(max(lam2, 0.0) / total)


def mici_matrix(matrix: np.ndarray) -> np.ndarray:
    """Symmetric zero-diagonal matrix of pairwise normalized-MICI distances."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise EarsimError("mici_matrix needs a (rows, features) matrix with >= 2 rows")
    centered = matrix - matrix.mean(axis=0)
    cov = centered.T @ centered / matrix.shape[0]
    var = np.diag(cov)
    total = var[:, None] + var[None, :]
    lam2 = 0.5 * (total - np.sqrt((var[:, None] - var[None, :]) ** 2 + 4.0 * cov**2))
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.where(total > 0, np.maximum(lam2, 0.0) / np.where(total > 0, total, 1.0), 0.0)
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[str, ...]
    selected_indices: tuple[int, ...]
    k_used: int
    epsilon: float | None
    h_r: float
    rr_subset: float
    rr_full: float
    rr_warning: bool = False
    flagged_constant: tuple[int, ...] = ()


def _kth_neighbor_distances(dist: np.ndarray, remaining: np.ndarray, k: int) -> np.ndarray:
    """For each remaining feature, the distance to its k-th nearest remaining other."""
    sub = dist[np.ix_(remaining, remaining)].copy()
    np.fill_diagonal(sub, np.inf)
    return np.partition(sub, k - 1, axis=1)[:, k - 1]


def fsfs_select(dist: np.ndarray, k: int) -> tuple[list[int], int, float | None]:
    """Forward sequential feature selection over a precomputed distance matrix.

    Repeatedly selects the feature whose k-th nearest neighbor is closest (ties:
    lowest index) and discards every feature within that radius, ties at the
    radius included. epsilon locks to the first selection's radius; whenever the
    current best radius exceeds epsilon, k decrements, and at k = 0 everything
    left is selected. Returns (selected indices in order, initial k used, epsilon)."""
    N = dist.shape[0]
    if N == 1:
        return [0], k, None
    k = min(k, N - 1)
    if k <= 0:
        return list(range(N)), 0, None
    remaining = np.arange(N)
    selected: list[int] = []
    epsilon: float | None = None
    k_init = k
    while remaining.size:
        if remaining.size == 1:
            selected.append(int(remaining[0]))
            break
        k_eff = min(k, remaining.size - 1)
        radii = _kth_neighbor_distances(dist, remaining, k_eff)
        best = int(np.argmin(radii))  # argmin takes the first = lowest index on ties
        best_radius = float(radii[best])
        if epsilon is None:
            epsilon = best_radius
        else:
            while best_radius > epsilon and k > 0:
                k -= 1
                if k == 0:
                    break
                k_eff = min(k, remaining.size - 1)
                radii = _kth_neighbor_distances(dist, remaining, k_eff)
                best = int(np.argmin(radii))
                best_radius = float(radii[best])
            if k == 0:
                selected.extend(int(i) for i in remaining)
                break
        chosen = int(remaining[best])
        selected.append(chosen)
        keep = []
        for pos, idx in enumerate(remaining):
            if pos == best:
                continue
            if dist[chosen, idx] <= best_radius:
                continue  # within the compact radius: redundant, discarded
            keep.append(idx)
        remaining = np.array(keep, dtype=np.int64)
    return selected, k_init, epsilon


def representation_entropy(matrix: np.ndarray) -> float:
    """Shannon entropy (natural log) of the normalized covariance eigenvalues."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise EarsimError("representation_entropy needs >= 2 rows")
    centered = matrix - matrix.mean(axis=0)
    cov = centered.T @ centered / matrix.shape[0]
    eig = np.clip(np.linalg.eigvalsh(np.atleast_2d(cov)), 0.0, None)
    total = eig.sum()
    if total == 0.0:
        return 0.0
    p = eig / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def redundancy_rate(matrix: np.ndarray) -> float:
    """Mean-ish absolute pairwise correlation: sum(|rho|, i>j) / (N(N-1)).

    Maximum is 0.5 (every pair perfectly correlated); below 2 features it is 0.
    Non-finite correlations (constant columns) contribute 0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    N = matrix.shape[1]
    if N < 2:
        return 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.corrcoef(matrix, rowvar=False)
    rho = np.where(np.isfinite(rho), rho, 0.0)
    upper = np.abs(rho[np.triu_indices(N, k=1)])
    return float(upper.sum() / (N * (N - 1)))


def choose_k(matrix: np.ndarray, feature_names: tuple[str, ...] | None = None) -> SelectionResult:
    """Scan k over [1, N-1], keep the selection maximizing representation entropy
    (ties to the smaller k); validate redundancy against the full set."""
    matrix = np.asarray(matrix, dtype=np.float64)
    N = matrix.shape[1]
    if feature_names is None:
        feature_names = FEATURE_NAMES
    if len(feature_names) != N:
        raise EarsimError(f"{N} columns but {len(feature_names)} feature names")
    if N < 2:
        raise EarsimError("choose_k needs at least 2 features")
    dist = mici_matrix(matrix)
    best: tuple[float, int, list[int], float | None] | None = None
    for k in range(1, N):
        selected, k_init, epsilon = fsfs_select(dist, k)
        h_r = representation_entropy(matrix[:, selected])
        if best is None or h_r > best[0] + 1e-12:
            best = (h_r, k_init, selected, epsilon)
    h_r, k_used, selected, epsilon = best
    rr_full = redundancy_rate(matrix)
    rr_subset = redundancy_rate(matrix[:, selected])
    return SelectionResult(
        selected=tuple(feature_names[i] for i in selected),
        selected_indices=tuple(selected),
        k_used=k_used,
        epsilon=epsilon,
        h_r=h_r,
        rr_subset=rr_subset,
        rr_full=rr_full,
        rr_warning=bool(rr_subset > rr_full + 1e-12),
    )


@dataclass(frozen=True)
class PairSelection:
    """Selection outcome for one dataset pair plus the pooled-z-scored matrices
    the downstream similarity estimate reuses."""

    result: SelectionResult
    z_a: np.ndarray
    z_b: np.ndarray


def select_for_pair(
    a: np.ndarray,
    b: np.ndarray,
    mode: str = "subset",
    feature_names: tuple[str, ...] | None = None,
) -> PairSelection:
    """Pooled z-scoring then FSFS on the concatenated rows of both datasets.

    mode 'all45' skips the search and keeps every feature (the similarity index
    then averages over the full catalog)."""
    if feature_names is None:
        feature_names = FEATURE_NAMES
    z_a, z_b, flagged = zscore_pair(a, b)
    pooled = np.concatenate([z_a, z_b], axis=0)
    if mode == "all45":
        rr = redundancy_rate(pooled)
        result = SelectionResult(
            selected=tuple(feature_names),
            selected_indices=tuple(range(pooled.shape[1])),
            k_used=0,
            epsilon=None,
            h_r=representation_entropy(pooled),
            rr_subset=rr,
            rr_full=rr,
            flagged_constant=tuple(flagged),
        )
    elif mode == "subset":
        result = dataclasses.replace(choose_k(pooled, feature_names), flagged_constant=tuple(flagged))
    else:
        raise EarsimError(f"unknown selection mode {mode!r}")
    return PairSelection(result=result, z_a=z_a, z_b=z_b)
