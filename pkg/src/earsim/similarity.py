"""Feature-distribution similarity: Gaussian-KDE PDF estimation on a shared
per-pair grid, Jensen-Shannon divergence (base 2), the per-pair similarity index
JSD-FSI = mean(1 - JSD) over the selected features, and Mann-Whitney U stage
comparisons with an exact small-sample mode."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SimilarityConfig
from .core import EarsimError
from .selection import PairSelection, SelectionResult, select_for_pair

_SILVERMAN_IQR_FACTOR = 1.349


@dataclass(frozen=True)
class PdfEstimate:
    grid: np.ndarray
    mass: np.ndarray          # sums to 1
    degenerate: bool = False  # constant input -> spike


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(SD, IQR/1.349) * n^(-1/5); falls back to SD when IQR is 0,
    and to 0 when the sample is constant (the caller then builds a spike)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    sd = float(np.std(values))
    if sd == 0.0:
        return 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / _SILVERMAN_IQR_FACTOR) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def pair_grid(
    a: np.ndarray, b: np.ndarray, grid_size: int = 256
) -> tuple[np.ndarray, float, float]:
    """Shared evaluation grid for one feature of one pair: the pooled value range
    extended by 3 bandwidths (the larger of the two) on each side."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h_a = silverman_bandwidth(a)
    h_b = silverman_bandwidth(b)
    h = max(h_a, h_b)
    lo = min(a.min(), b.min()) - 3.0 * h
    hi = max(a.max(), b.max()) + 3.0 * h
    if hi <= lo:
        lo -= 0.5
        hi += 0.5
    return np.linspace(lo, hi, grid_size), h_a, h_b


def estimate_pdf(values: np.ndarray, grid: np.ndarray, bandwidth: float | None = None) -> PdfEstimate:
    """Gaussian KDE evaluated on the grid and renormalized to unit mass.

    A constant sample yields all mass on the nearest grid point, flagged."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise EarsimError(f"estimate_pdf needs >= 2 values, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise EarsimError("estimate_pdf: non-finite values")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values)
    if bandwidth == 0.0:
        mass = np.zeros(grid.shape[0])
        mass[int(np.argmin(np.abs(grid - values[0])))] = 1.0
        return PdfEstimate(grid=grid, mass=mass, degenerate=True)
    z = (grid[:, None] - values[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).sum(axis=1)  # normalization cancels below
    total = density.sum()
    if total == 0.0:
        # all mass fell outside the grid; treat as a spike at the sample mean
        mass = np.zeros(grid.shape[0])
        mass[int(np.argmin(np.abs(grid - values.mean())))] = 1.0
        return PdfEstimate(grid=grid, mass=mass, degenerate=True)
    return PdfEstimate(grid=grid, mass=density / total)


def jsd(p: PdfEstimate, q: PdfEstimate) -> float:
    """Jensen-Shannon divergence, base 2, in [0, 1]. Grids must be identical."""
    if p.grid.shape != q.grid.shape or not np.array_equal(p.grid, q.grid):
        raise EarsimError("jsd: grid mismatch")
    m = 0.5 * (p.mass + q.mass)

    def kl(f: np.ndarray) -> float:
        nz = f > 0
        return float((f[nz] * np.log2(f[nz] / m[nz])).sum())

    value = 0.5 * (kl(p.mass) + kl(q.mass))
    return float(min(max(value, 0.0), 1.0))


@dataclass(frozen=True)
class PairScore:
    """JSD-FSI for one channel pair in one stage."""

    channel_a: str
    channel_b: str
    score: float
    n_features: int
    per_feature: tuple[float, ...]  # 1 - JSD per selected feature, selection order


def score_pair(
    selection: PairSelection,
    channel_a: str,
    channel_b: str,
    grid_size: int = 256,
) -> PairScore:
    """Mean of (1 - JSD) across the pair's selected features, each feature's two
    PDFs estimated on its own shared pooled grid."""
    indices = selection.result.selected_indices
    if not indices:
        raise EarsimError("score_pair: empty selection")
    sims = []
    for idx in indices:
        col_a = selection.z_a[:, idx]
        col_b = selection.z_b[:, idx]
        grid, h_a, h_b = pair_grid(col_a, col_b, grid_size)
        p = estimate_pdf(col_a, grid, h_a)
        q = estimate_pdf(col_b, grid, h_b)
        sims.append(1.0 - jsd(p, q))
    return PairScore(
        channel_a=channel_a,
        channel_b=channel_b,
        score=float(np.mean(sims)),
        n_features=len(indices),
        per_feature=tuple(sims),
    )


def jsd_fsi(
    a: np.ndarray,
    b: np.ndarray,
    mode: str = "subset",
    grid_size: int = 256,
) -> PairScore:
    """Convenience wrapper: select features for the raw pair, then score it."""
    selection = select_for_pair(a, b, mode)
    return score_pair(selection, "a", "b", grid_size)


@dataclass(frozen=True)
class StageCampaign:
    """All pair scores for one (subject, stage): 21 in-ear-vs-PSG and C(21,2)
    PSG-vs-PSG comparisons, plus each pair's selection for the tally."""

    subject: str
    stage: str
    inear_scores: tuple[PairScore, ...]
    psg_scores: tuple[PairScore, ...]
    selections: dict[tuple[str, str], SelectionResult]


def stage_campaign(
    subject: str,
    stage: str,
    inear_channel: str,
    inear_matrix: np.ndarray,
    psg_matrices: dict[str, np.ndarray],
    mode: str = "subset",
    grid_size: int = 256,
) -> StageCampaign:
    """Score every (in-ear, PSG) and (PSG, PSG) channel pair for one stage."""
    psg_names = list(psg_matrices)
    inear_scores = []
    selections: dict[tuple[str, str], SelectionResult] = {}
    for name in psg_names:
        sel = select_for_pair(psg_matrices[name], inear_matrix, mode)
        score = score_pair(sel, name, inear_channel, grid_size)
        inear_scores.append(score)
        selections[(name, inear_channel)] = sel.result
    psg_scores = []
    for name_a, name_b in itertools.combinations(psg_names, 2):
        sel = select_for_pair(psg_matrices[name_a], psg_matrices[name_b], mode)
        score = score_pair(sel, name_a, name_b, grid_size)
        psg_scores.append(score)
        selections[(name_a, name_b)] = sel.result
    return StageCampaign(
        subject=subject,
        stage=stage,
        inear_scores=tuple(inear_scores),
        psg_scores=tuple(psg_scores),
        selections=selections,
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U

@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float  # U of the first sample
    p_two_sided: float
    p_greater: float    # H1: first sample stochastically greater
    p_less: float
    method: str         # "exact" | "asymptotic"


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(pooled.shape[0])
    sorted_vals = pooled[order]
    i = 0
    while i < sorted_vals.shape[0]:
        j = i
        while j + 1 < sorted_vals.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_of_first(a: np.ndarray, b: np.ndarray) -> float:
    ranks = _midranks(np.concatenate([a, b]))
    r1 = float(ranks[: a.shape[0]].sum())
    return r1 - a.shape[0] * (a.shape[0] + 1) / 2.0


def _exact_p_values(a: np.ndarray, b: np.ndarray, u_obs: float) -> tuple[float, float, float]:
    # ranks depend only on the pooled multiset, so enumerate assignments over
    # precomputed midranks rather than re-ranking per assignment
    pooled = np.concatenate([a, b])
    n1 = a.shape[0]
    ranks = [float(r) for r in _midranks(pooled)]
    offset = n1 * (n1 + 1) / 2.0
    count_ge = 0
    count_le = 0
    total = 0
    for combo in itertools.combinations(range(pooled.shape[0]), n1):
        u = sum(ranks[i] for i in combo) - offset
        count_ge += u >= u_obs - 1e-12
        count_le += u <= u_obs + 1e-12
        total += 1
    p_greater = count_ge / total
    p_less = count_le / total
    return min(1.0, 2.0 * min(p_greater, p_less)), p_greater, p_less


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(
    a, b, exact: bool | None = None
) -> MannWhitneyResult:
    """Mann-Whitney U with midrank ties.

    Exact enumeration over all assignments when both samples have <= 8 values
    (or when forced); otherwise the normal approximation with tie and
    continuity corrections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EarsimError("mann_whitney_u: empty sample")
    u1 = _u_of_first(a, b)
    n1, n2 = a.shape[0], b.shape[0]
    if exact is None:
        exact = n1 <= 8 and n2 <= 8
    if exact:
        p_two, p_greater, p_less = _exact_p_values(a, b, u1)
        return MannWhitneyResult(u1, p_two, p_greater, p_less, "exact")
    n = n1 + n2
    mu = n1 * n2 / 2.0
    pooled = np.concatenate([a, b])
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / (n * (n - 1))
    sigma2 = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if sigma2 <= 0:
        return MannWhitneyResult(u1, 1.0, 1.0, 1.0, "asymptotic")
    sigma = math.sqrt(sigma2)
    p_greater = _normal_sf((u1 - mu - 0.5) / sigma)
    p_less = 1.0 - _normal_sf((u1 - mu + 0.5) / sigma)
    z_two = (abs(u1 - mu) - 0.5) / sigma
    p_two = min(1.0, 2.0 * _normal_sf(max(z_two, 0.0)))
    return MannWhitneyResult(u1, p_two, min(p_greater, 1.0), min(p_less, 1.0), "asymptotic")


def sample_moments(values) -> dict[str, float]:
    """Skewness and excess kurtosis, reported alongside the nonparametric test."""
    values = np.asarray(values, dtype=np.float64)
    out = {"n": float(values.shape[0]), "mean": float(values.mean()), "skewness": 0.0, "kurtosis": 0.0}
    centered = values - values.mean()
    m2 = float(np.mean(centered**2))
    if m2 > 0:
        out["skewness"] = float(np.mean(centered**3)) / m2**1.5
        out["kurtosis"] = float(np.mean(centered**4)) / m2**2 - 3.0
    return out


def overlap_coefficient(a, b, n_bins: int = 10) -> float:
    """Histogram overlap of two samples: sum of min(p_bin, q_bin) over shared
    probability-normalized bins spanning the pooled range."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return float(np.minimum(pa / pa.sum(), pb / pb.sum()).sum())


def score_histogram(scores, bin_width: float = 0.01) -> dict[str, list]:
    """Counts over fixed-width bins on [0, 1] (scores of 1.0 land in the last bin)."""
    scores = np.asarray(scores, dtype=np.float64)
    n_bins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(np.clip(scores, 0.0, 1.0), bins=edges)
    return {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}
