"""The 18 per-epoch time-domain features.

Scalar functions are the reference API (and what the oracle tests exercise);
`time_feature_matrix` is the batched driver the pipeline uses. Both share the
same kernels so they agree bit-for-bit.

Degenerate epochs (constant, all-zero) produce documented fallback values and
are counted, never NaN.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from .config import TimeFeatureConfig
from .core import EarsimError, TIME_FEATURE_NAMES


# ---------------------------------------------------------------------------
# approximate / sample entropy (shared match-counting kernel, template dim 2)

@njit(cache=True, nogil=True)
def _match_counts_d2(x: np.ndarray, r: float):
    """Per-template counts of OTHER templates within Chebyshev distance r, at
    template lengths 2 and 3 simultaneously.

    Templates are the N-1 windows (x[i], x[i+1]); the length-3 extension of the
    last one does not exist, which the +inf sentinel encodes. Templates are
    processed in order of their first coordinate so a sliding window bounds the
    candidate set by |x_i - x_j| <= r before the remaining coordinates are
    checked."""
    N = x.shape[0]
    n2 = N - 1
    first = np.empty(n2, dtype=np.float64)
    for i in range(n2):
        first[i] = x[i]
    order = np.argsort(first)
    x0 = np.empty(n2, dtype=np.float64)
    x1 = np.empty(n2, dtype=np.float64)
    x2 = np.empty(n2, dtype=np.float64)
    for k in range(n2):
        i = order[k]
        x0[k] = x[i]
        x1[k] = x[i + 1]
        if i + 2 < N:
            x2[k] = x[i + 2]
        else:
            x2[k] = np.inf
    c2 = np.zeros(n2, dtype=np.float64)
    c3 = np.zeros(n2, dtype=np.float64)
    lo = 0
    for k in range(n2):
        xk0 = x0[k]
        xk1 = x1[k]
        xk2 = x2[k]
        while xk0 - x0[lo] > r:
            lo += 1
        ck2 = 0.0
        ck3 = 0.0
        # branchless: matches are 0/1 floats, so accumulation order is exact
        for j in range(lo, k):
            m2 = 1.0 if abs(xk1 - x1[j]) <= r else 0.0
            m3 = m2 if abs(xk2 - x2[j]) <= r else 0.0
            ck2 += m2
            c2[j] += m2
            ck3 += m3
            c3[j] += m3
        c2[k] += ck2
        c3[k] += ck3
    out2 = np.empty(n2, dtype=np.float64)
    out3 = np.empty(n2, dtype=np.float64)
    for k in range(n2):
        out2[order[k]] = c2[k]
        out3[order[k]] = c3[k]
    return out2, out3


def _counts_generic(x: np.ndarray, m: int, r: float) -> np.ndarray:
    """Chebyshev match counts (excluding self) for all length-m templates."""
    emb = sliding_window_view(x, m)
    T = emb.shape[0]
    counts = np.zeros(T, dtype=np.float64)
    chunk = max(1, 2_000_000 // max(T, 1))
    for start in range(0, T, chunk):
        block = emb[start : start + chunk]
        dist = np.max(np.abs(block[:, None, :] - emb[None, :, :]), axis=2)
        counts[start : start + chunk] = np.sum(dist <= r, axis=1) - 1.0
    return counts


def _entropy_pair(x: np.ndarray, dim: int, r: float) -> tuple[float, float, bool]:
    """(ApEn, SampEn, degenerate_flag) for one epoch at template length `dim`."""
    N = x.shape[0]
    if N < dim + 2:
        raise EarsimError(f"entropy needs at least {dim + 2} samples, got {N}")
    if r <= 0:
        return 0.0, 0.0, True
    if dim == 2:
        c_m, c_m1 = _match_counts_d2(np.ascontiguousarray(x, dtype=np.float64), r)
    else:
        c_m = _counts_generic(x, dim, r)
        c_m1_short = _counts_generic(x, dim + 1, r)
        c_m1 = np.zeros(N - dim + 1, dtype=np.float64)
        c_m1[: N - dim] = c_m1_short
    n_m = N - dim + 1       # templates of length dim
    n_m1 = N - dim          # templates of length dim+1
    phi_m = float(np.mean(np.log((c_m + 1.0) / n_m)))
    phi_m1 = float(np.mean(np.log((c_m1[:n_m1] + 1.0) / n_m1)))
    apen = phi_m - phi_m1
    # SampEn restricts both template sets to the first N-dim windows
    b_pairs = (float(c_m.sum()) - 2.0 * float(c_m[n_m - 1])) / 2.0
    a_pairs = float(c_m1.sum()) / 2.0
    if a_pairs == 0.0 or b_pairs == 0.0:
        return apen, 0.0, True
    return apen, -math.log(a_pairs / b_pairs), False


def approximate_entropy(x: np.ndarray, dim: int = 2, r: float | None = None) -> float:
    """ApEn with self-matches, Chebyshev distance, natural log.

    r defaults to 0.2 times the epoch standard deviation. Constant epochs
    (r = 0) fall back to 0."""
    x = np.asarray(x, dtype=np.float64)
    if r is None:
        r = 0.2 * float(np.std(x))
    return _entropy_pair(x, dim, r)[0]


def sample_entropy(x: np.ndarray, dim: int = 2, r: float | None = None) -> float:
    """SampEn = -ln(A/B) without self-matches; zero match counts fall back to 0."""
    x = np.asarray(x, dtype=np.float64)
    if r is None:
        r = 0.2 * float(np.std(x))
    return _entropy_pair(x, dim, r)[1]


# ---------------------------------------------------------------------------
# ordinal / algorithmic complexity

def svd_entropy(x: np.ndarray, embed_dim: int = 3, delay: int = 1) -> float:
    """Shannon entropy (base 2) of normalized singular values of the delay
    embedding. All-zero epochs fall back to 0."""
    x = np.asarray(x, dtype=np.float64)
    span = (embed_dim - 1) * delay
    if x.shape[0] < span + 2:
        raise EarsimError(f"svd_entropy needs at least {span + 2} samples")
    cols = [x[k * delay : x.shape[0] - span + k * delay] for k in range(embed_dim)]
    Y = np.stack(cols, axis=1)
    gram = Y.T @ Y
    eig = np.linalg.eigvalsh(gram)
    sigma = np.sqrt(np.clip(eig, 0.0, None))
    total = sigma.sum()
    if total == 0.0:
        return 0.0
    p = sigma / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def permutation_entropy(x: np.ndarray, order: int = 3, delay: int = 1) -> float:
    """Entropy (base 2) of ordinal-pattern frequencies; ties rank by index."""
    x = np.asarray(x, dtype=np.float64)
    span = (order - 1) * delay
    if x.shape[0] <= span:
        raise EarsimError(f"permutation_entropy needs more than {span} samples")
    windows = sliding_window_view(x, span + 1)[:, ::delay]  # (T, order)
    ranks = np.argsort(windows, axis=1, kind="stable")
    base = np.array([math.factorial(order - 1 - k) for k in range(order)])
    # Lehmer-style code: count how many later entries are smaller
    codes = np.zeros(windows.shape[0], dtype=np.int64)
    for k in range(order):
        smaller_later = np.sum(ranks[:, k + 1 :] < ranks[:, k : k + 1], axis=1)
        codes += smaller_later * base[k]
    counts = np.bincount(codes, minlength=math.factorial(order))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


@njit(cache=True, nogil=True)
def _lz76_phrase_count(s: np.ndarray) -> int:
    """LZ76 phrase count: each phrase is the shortest prefix of the rest that is
    not a substring of everything before its last symbol (self-overlap allowed).
    A trailing still-reproducible tail does not open a new phrase.

    Runs in O(n) via a suffix automaton over the binary sequence. `fpos[t]`
    is the smallest end index of any occurrence of state t's substrings, so a
    length-m match starting at l has an occurrence starting before l exactly
    when fpos[t] - m < l. Phrase boundaries are integers, identical to the
    quadratic scan the oracle tests use."""
    n = s.shape[0]
    if n == 0:
        return 0
    max_states = 2 * n + 2
    slen = np.zeros(max_states, dtype=np.int32)
    link = np.full(max_states, -1, dtype=np.int32)
    fpos = np.zeros(max_states, dtype=np.int32)
    nxt = np.full((max_states, 2), -1, dtype=np.int32)
    size = 1
    last = 0
    for i in range(n):
        ch = s[i]
        cur = size
        size += 1
        slen[cur] = slen[last] + 1
        fpos[cur] = i
        p = last
        while p != -1 and nxt[p, ch] == -1:
            nxt[p, ch] = cur
            p = link[p]
        if p == -1:
            link[cur] = 0
        else:
            q = nxt[p, ch]
            if slen[p] + 1 == slen[q]:
                link[cur] = q
            else:
                clone = size
                size += 1
                slen[clone] = slen[p] + 1
                link[clone] = link[q]
                fpos[clone] = fpos[q]
                nxt[clone, 0] = nxt[q, 0]
                nxt[clone, 1] = nxt[q, 1]
                while p != -1 and nxt[p, ch] == q:
                    nxt[p, ch] = clone
                    p = link[p]
                link[q] = clone
                link[cur] = clone
        last = cur
    c = 0
    l = 0
    while l < n:
        state = 0
        m = 0
        while l + m < n:
            t = nxt[state, s[l + m]]
            if t == -1 or fpos[t] - m >= l:
                break
            state = t
            m += 1
        if l + m >= n and l > 0:
            break
        c += 1
        l += m + 1
    return c


def binarize_epoch(x: np.ndarray) -> np.ndarray:
    """Median coarse-graining: strictly above the median -> 1, else 0."""
    x = np.asarray(x, dtype=np.float64)
    return (x > np.median(x)).astype(np.uint8)


def lempel_ziv(x: np.ndarray) -> float:
    """Normalized LZ76 complexity C(N) = c(N) * log2(N) / N of the median-binarized epoch."""
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[0]
    if N < 2:
        raise EarsimError("lempel_ziv needs at least 2 samples")
    c = _lz76_phrase_count(binarize_epoch(x))
    return float(c * np.log2(N) / N)


# ---------------------------------------------------------------------------
# fluctuation / fractal geometry

def dfa_window_sizes(n_samples: int, n_windows: int = 10, min_window: int = 4) -> np.ndarray:
    """Log-spaced unique integer window sizes in [min_window, n_samples // 4]."""
    max_window = n_samples // 4
    if max_window < min_window:
        raise EarsimError(
            f"dfa needs at least {4 * min_window} samples, got {n_samples}"
        )
    sizes = np.geomspace(min_window, max_window, n_windows)
    return np.unique(np.round(sizes).astype(np.int64))


def dfa_exponent(
    x: np.ndarray, n_windows: int = 10, min_window: int = 4
) -> float:
    """Detrended fluctuation exponent: slope of log F(n) against log n.

    The profile is the cumulative sum of the mean-removed epoch; each window is
    detrended with its own least-squares line; F(n) pools residuals over the
    covered samples. Zero-variance epochs fall back to 0."""
    x = np.asarray(x, dtype=np.float64)
    sizes = dfa_window_sizes(x.shape[0], n_windows, min_window)
    if np.std(x) == 0.0:
        return 0.0
    y = np.cumsum(x - x.mean())
    fluct = np.empty(sizes.shape[0])
    for idx, w in enumerate(sizes):
        nw = y.shape[0] // w
        seg = y[: nw * w].reshape(nw, w)
        t = np.arange(w, dtype=np.float64)
        t_c = t - t.mean()
        denom = float((t_c * t_c).sum())
        slope = (seg * t_c).sum(axis=1) / denom
        resid = seg - seg.mean(axis=1, keepdims=True) - slope[:, None] * t_c
        fluct[idx] = np.sqrt((resid * resid).sum() / (nw * w))
    if np.any(fluct == 0.0):
        return 0.0
    logn = np.log(sizes.astype(np.float64))
    logf = np.log(fluct)
    ln_c = logn - logn.mean()
    return float((ln_c * logf).sum() / (ln_c * ln_c).sum())


def hjorth_params(x: np.ndarray) -> tuple[float, float, float]:
    """(activity, mobility, complexity) with one-sample differences.

    Activity is the variance of the max-abs-normalized epoch; mobility and
    complexity are amplitude-free. Zero-variance epochs return (0, 0, 0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        raise EarsimError("hjorth needs at least 3 samples")
    var_x = float(np.var(x))
    if var_x == 0.0:
        return 0.0, 0.0, 0.0
    peak = float(np.max(np.abs(x)))
    activity = var_x / (peak * peak)
    dx = np.diff(x)
    ddx = np.diff(dx)
    var_dx = float(np.var(dx))
    var_ddx = float(np.var(ddx))
    mobility = math.sqrt(var_dx / var_x)
    if var_dx == 0.0:
        return activity, mobility, 0.0
    complexity = math.sqrt(var_ddx / var_dx) / mobility
    return activity, mobility, complexity


def katz_fd(x: np.ndarray) -> float:
    """Katz fractal dimension on amplitude-only distances.

    L is the summed absolute step length, d the max excursion from the first
    sample, n the step count; straight monotone lines give exactly 1. Constant
    or otherwise singular trajectories fall back to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise EarsimError("katz_fd needs at least 2 samples")
    L = float(np.sum(np.abs(np.diff(x))))
    d = float(np.max(np.abs(x - x[0])))
    n = x.shape[0] - 1
    if L == 0.0 or d == 0.0:
        return 1.0
    denom = math.log(n) + math.log(d / L)
    if denom <= 0.0:
        return 1.0
    return math.log(n) / denom


def higuchi_fd(x: np.ndarray, kmax: int = 10) -> float:
    """Higuchi fractal dimension, curve lengths averaged over the k offsets,
    slope of log L(k) on log(1/k). Constant epochs fall back to 0."""
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[0]
    if N < kmax + 1:
        raise EarsimError(f"higuchi_fd needs at least {kmax + 1} samples")
    lengths = np.empty(kmax)
    for k in range(1, kmax + 1):
        total = 0.0
        for m in range(k):
            n_i = (N - 1 - m) // k
            if n_i < 1:
                return 0.0
            idx = m + k * np.arange(n_i + 1)
            dist = float(np.sum(np.abs(np.diff(x[idx]))))
            total += dist * (N - 1) / (n_i * k * k)
        lengths[k - 1] = total / k
    if np.any(lengths == 0.0):
        return 0.0
    logl = np.log(lengths)
    logk = np.log(1.0 / np.arange(1, kmax + 1, dtype=np.float64))
    k_c = logk - logk.mean()
    return float((k_c * logl).sum() / (k_c * k_c).sum())


def petrosian_fd(x: np.ndarray) -> float:
    """Petrosian fractal dimension from the count of first-difference sign flips."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        raise EarsimError("petrosian_fd needs at least 3 samples")
    dx = np.diff(x)
    n_delta = int(np.sum(dx[:-1] * dx[1:] < 0))
    n = x.shape[0]
    return math.log(n) / (math.log(n) + math.log(n / (n + 0.4 * n_delta)))


# ---------------------------------------------------------------------------
# descriptive statistics

def zero_crossings(x: np.ndarray) -> int:
    """Sign changes, ignoring exact zeros (they neither count nor interrupt)."""
    x = np.asarray(x, dtype=np.float64)
    s = np.sign(x)
    s = s[s != 0]
    if s.shape[0] < 2:
        return 0
    return int(np.sum(s[1:] != s[:-1]))


def descriptive_stats(x: np.ndarray) -> dict[str, float]:
    """std, skewness, kurtosis (excess), max first derivative, IQR, zero crossings.

    std, IQR and the max derivative are taken on the max-abs-normalized epoch;
    skewness and kurtosis are standardized moments (0 for constant epochs)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 4:
        raise EarsimError("descriptive_stats needs at least 4 samples")
    sd = float(np.std(x))
    out = {
        "std": 0.0,
        "skewness": 0.0,
        "kurtosis": 0.0,
        "max_first_derivative": 0.0,
        "iqr": 0.0,
        "zero_crossings": float(zero_crossings(x)),
    }
    if sd == 0.0:
        return out
    peak = float(np.max(np.abs(x)))
    xn = x / peak
    centered = x - x.mean()
    m2 = float(np.mean(centered**2))
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    out["std"] = float(np.std(xn))
    out["skewness"] = m3 / m2**1.5
    out["kurtosis"] = m4 / m2**2 - 3.0
    out["max_first_derivative"] = float(np.max(np.abs(np.diff(xn))))
    q75, q25 = np.percentile(xn, [75, 25])
    out["iqr"] = float(q75 - q25)
    return out


# ---------------------------------------------------------------------------
# batched driver

def _batch_descriptive(epochs: np.ndarray, out: dict[str, np.ndarray]) -> np.ndarray:
    E, N = epochs.shape
    sd = epochs.std(axis=1)
    ok = sd > 0
    peak = np.max(np.abs(epochs), axis=1)
    peak_safe = np.where(peak > 0, peak, 1.0)
    centered = epochs - epochs.mean(axis=1, keepdims=True)
    m2 = np.mean(centered**2, axis=1)
    m2_safe = np.where(ok, m2, 1.0)
    out["std"] = np.where(ok, sd / peak_safe, 0.0)
    out["skewness"] = np.where(ok, np.mean(centered**3, axis=1) / m2_safe**1.5, 0.0)
    out["kurtosis"] = np.where(ok, np.mean(centered**4, axis=1) / m2_safe**2 - 3.0, 0.0)
    step = np.max(np.abs(np.diff(epochs, axis=1)), axis=1)
    out["max_first_derivative"] = np.where(ok, step / peak_safe, 0.0)
    q75 = np.percentile(epochs, 75, axis=1)
    q25 = np.percentile(epochs, 25, axis=1)
    out["iqr"] = np.where(ok, (q75 - q25) / peak_safe, 0.0)
    zc = np.empty(E)
    for e in range(E):
        zc[e] = zero_crossings(epochs[e])
    out["zero_crossings"] = zc
    return ok


def _batch_svd_entropy(epochs: np.ndarray, embed_dim: int, delay: int) -> np.ndarray:
    E, N = epochs.shape
    span = (embed_dim - 1) * delay
    M = N - span
    gram = np.empty((E, embed_dim, embed_dim))
    for a in range(embed_dim):
        for b in range(a, embed_dim):
            g = np.einsum(
                "et,et->e",
                epochs[:, a * delay : a * delay + M],
                epochs[:, b * delay : b * delay + M],
            )
            gram[:, a, b] = g
            gram[:, b, a] = g
    eig = np.linalg.eigvalsh(gram)
    sigma = np.sqrt(np.clip(eig, 0.0, None))
    total = sigma.sum(axis=1, keepdims=True)
    ok = total[:, 0] > 0
    p = sigma / np.where(total > 0, total, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return np.where(ok, -terms.sum(axis=1), 0.0)


def _batch_perm_entropy_order3(epochs: np.ndarray) -> np.ndarray:
    """Order-3, delay-1 fast path via pairwise comparisons (ties rank by index)."""
    a = epochs[:, :-2]
    b = epochs[:, 1:-1]
    c = epochs[:, 2:]
    codes = 4 * (a <= b).astype(np.int64) + 2 * (a <= c) + (b <= c)
    E = epochs.shape[0]
    ent = np.empty(E)
    T = codes.shape[1]
    for e in range(E):
        counts = np.bincount(codes[e], minlength=8)
        p = counts[counts > 0] / T
        ent[e] = -(p * np.log2(p)).sum()
    return ent


def _batch_dfa(epochs: np.ndarray, n_windows: int, min_window: int) -> np.ndarray:
    E, N = epochs.shape
    sizes = dfa_window_sizes(N, n_windows, min_window)
    ok = epochs.std(axis=1) > 0
    y = np.cumsum(epochs - epochs.mean(axis=1, keepdims=True), axis=1)
    fluct = np.empty((E, sizes.shape[0]))
    for idx, w in enumerate(sizes):
        nw = N // w
        seg = y[:, : nw * w].reshape(E, nw, w)
        t_c = np.arange(w, dtype=np.float64)
        t_c -= t_c.mean()
        denom = float((t_c * t_c).sum())
        slope = (seg * t_c).sum(axis=2) / denom
        resid = seg - seg.mean(axis=2, keepdims=True) - slope[..., None] * t_c
        fluct[:, idx] = np.sqrt((resid * resid).sum(axis=(1, 2)) / (nw * w))
    ok &= np.all(fluct > 0, axis=1)
    logn = np.log(sizes.astype(np.float64))
    ln_c = logn - logn.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.where(fluct > 0, np.log(np.where(fluct > 0, fluct, 1.0)), 0.0)
    alpha = (logf * ln_c).sum(axis=1) / (ln_c * ln_c).sum()
    return np.where(ok, alpha, 0.0)


def _batch_hjorth(epochs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    var_x = epochs.var(axis=1)
    ok = var_x > 0
    peak = np.max(np.abs(epochs), axis=1)
    peak_safe = np.where(peak > 0, peak, 1.0)
    dx = np.diff(epochs, axis=1)
    ddx = np.diff(dx, axis=1)
    var_dx = dx.var(axis=1)
    var_ddx = ddx.var(axis=1)
    var_x_safe = np.where(ok, var_x, 1.0)
    activity = np.where(ok, var_x / peak_safe**2, 0.0)
    mobility = np.where(ok, np.sqrt(var_dx / var_x_safe), 0.0)
    ok_dx = ok & (var_dx > 0)
    var_dx_safe = np.where(var_dx > 0, var_dx, 1.0)
    mobility_safe = np.where(mobility > 0, mobility, 1.0)
    complexity = np.where(ok_dx, np.sqrt(var_ddx / var_dx_safe) / mobility_safe, 0.0)
    return activity, mobility, complexity


def _batch_katz(epochs: np.ndarray) -> np.ndarray:
    N = epochs.shape[1]
    L = np.sum(np.abs(np.diff(epochs, axis=1)), axis=1)
    d = np.max(np.abs(epochs - epochs[:, :1]), axis=1)
    ok = (L > 0) & (d > 0)
    L_safe = np.where(L > 0, L, 1.0)
    d_safe = np.where(d > 0, d, 1.0)
    logn = math.log(N - 1)
    denom = logn + np.log(d_safe / L_safe)
    ok &= denom > 0
    denom_safe = np.where(denom > 0, denom, 1.0)
    return np.where(ok, logn / denom_safe, 1.0)


def _batch_higuchi(epochs: np.ndarray, kmax: int) -> np.ndarray:
    E, N = epochs.shape
    lengths = np.empty((E, kmax))
    for k in range(1, kmax + 1):
        total = np.zeros(E)
        for m in range(k):
            n_i = (N - 1 - m) // k
            idx = m + k * np.arange(n_i + 1)
            dist = np.sum(np.abs(np.diff(epochs[:, idx], axis=1)), axis=1)
            total += dist * (N - 1) / (n_i * k * k)
        lengths[:, k - 1] = total / k
    ok = np.all(lengths > 0, axis=1)
    logk = np.log(1.0 / np.arange(1, kmax + 1, dtype=np.float64))
    k_c = logk - logk.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        logl = np.where(lengths > 0, np.log(np.where(lengths > 0, lengths, 1.0)), 0.0)
    fd = (logl * k_c).sum(axis=1) / (k_c * k_c).sum()
    return np.where(ok, fd, 0.0)


def _batch_petrosian(epochs: np.ndarray) -> np.ndarray:
    N = epochs.shape[1]
    dx = np.diff(epochs, axis=1)
    n_delta = np.sum(dx[:, :-1] * dx[:, 1:] < 0, axis=1)
    return math.log(N) / (math.log(N) + np.log(N / (N + 0.4 * n_delta)))


def time_feature_matrix(
    epochs: np.ndarray, cfg: TimeFeatureConfig | None = None
) -> tuple[np.ndarray, dict[str, int]]:
    """(E, 18) matrix in catalog order plus per-feature degenerate-epoch counts."""
    if cfg is None:
        cfg = TimeFeatureConfig()
    epochs = np.asarray(epochs, dtype=np.float64)
    if epochs.ndim != 2:
        raise EarsimError(f"expected (epochs, samples) matrix, got shape {epochs.shape}")
    E, N = epochs.shape
    cols: dict[str, np.ndarray] = {}
    flags: dict[str, int] = {}

    ok = _batch_descriptive(epochs, cols)
    n_const = int(np.sum(~ok))
    for name in ("std", "skewness", "kurtosis", "max_first_derivative", "iqr"):
        flags[name] = n_const

    sd = epochs.std(axis=1)
    apen = np.empty(E)
    sampen = np.empty(E)
    n_sampen_degenerate = 0
    for e in range(E):
        a, s, degen = _entropy_pair(
            epochs[e], cfg.entropy_dim, cfg.entropy_r_factor * sd[e]
        )
        apen[e] = a
        sampen[e] = s
        n_sampen_degenerate += degen
    cols["approximate_entropy"] = apen
    cols["sample_entropy"] = sampen
    flags["approximate_entropy"] = n_const
    flags["sample_entropy"] = n_sampen_degenerate

    cols["svd_entropy"] = _batch_svd_entropy(epochs, cfg.svd_embed_dim, cfg.svd_embed_delay)
    if cfg.perm_order == 3 and cfg.perm_delay == 1:
        cols["permutation_entropy"] = _batch_perm_entropy_order3(epochs)
    else:
        cols["permutation_entropy"] = np.array(
            [permutation_entropy(epochs[e], cfg.perm_order, cfg.perm_delay) for e in range(E)]
        )

    lz = np.empty(E)
    log2n = np.log2(N)
    medians = np.median(epochs, axis=1)
    for e in range(E):
        bits = (epochs[e] > medians[e]).astype(np.uint8)
        lz[e] = _lz76_phrase_count(bits) * log2n / N
    cols["lempel_ziv"] = lz

    cols["dfa_exponent"] = _batch_dfa(epochs, cfg.dfa_n_windows, cfg.dfa_min_window)
    flags["dfa_exponent"] = n_const

    activity, mobility, complexity = _batch_hjorth(epochs)
    cols["hjorth_activity"] = activity
    cols["hjorth_mobility"] = mobility
    cols["hjorth_complexity"] = complexity
    flags["hjorth_activity"] = n_const

    katz = _batch_katz(epochs)
    cols["katz_fd"] = katz
    flags["katz_fd"] = n_const
    cols["higuchi_fd"] = _batch_higuchi(epochs, cfg.higuchi_kmax)
    flags["higuchi_fd"] = n_const
    cols["petrosian_fd"] = _batch_petrosian(epochs)

    matrix = np.column_stack([cols[name] for name in TIME_FEATURE_NAMES])
    return matrix, {k: v for k, v in flags.items() if v}
