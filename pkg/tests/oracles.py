"""Brute-force reference implementations, used only by tests.

Each function re-derives its quantity from the plain definition with the most
literal mechanics available (double loops, substring search, full enumeration),
sharing no code with the library, so agreement is evidence rather than
tautology. All are O(N^2) or worse; keep inputs short.
"""
import itertools
import math

import numpy as np


def _chebyshev(u, v):
    return max(abs(a - b) for a, b in zip(u, v))


def apen_oracle(x, m=2, r=None):
    """Approximate entropy from the definition: self-matches included, each
    phi is the mean log of the fraction of templates within r."""
    x = [float(v) for v in x]
    n = len(x)
    if r is None:
        r = 0.2 * float(np.std(np.asarray(x)))

    def phi(mm):
        templates = [x[i : i + mm] for i in range(n - mm + 1)]
        total = 0.0
        for u in templates:
            c = sum(1 for v in templates if _chebyshev(u, v) <= r)
            total += math.log(c / len(templates))
        return total / len(templates)

    return phi(m) - phi(m + 1)


def sampen_oracle(x, m=2, r=None):
    """Sample entropy from the definition: -ln(A/B) over unordered template
    pairs without self-matches, both template sets limited to the first
    n - m windows."""
    x = [float(v) for v in x]
    n = len(x)
    if r is None:
        r = 0.2 * float(np.std(np.asarray(x)))
    nt = n - m
    a_count = 0
    b_count = 0
    for i in range(nt):
        for j in range(i + 1, nt):
            if _chebyshev(x[i : i + m], x[j : j + m]) <= r:
                b_count += 1
            if _chebyshev(x[i : i + m + 1], x[j : j + m + 1]) <= r:
                a_count += 1
    if a_count == 0 or b_count == 0:
        return 0.0
    return -math.log(a_count / b_count)


def permen_oracle(x, order=3, delay=1):
    """Permutation entropy by counting ordinal patterns as explicit
    permutation tuples (ties ranked by index), entropy in bits."""
    x = [float(v) for v in x]
    span = (order - 1) * delay
    counts: dict[tuple, int] = {}
    for start in range(len(x) - span):
        w = [x[start + k * delay] for k in range(order)]
        pattern = tuple(sorted(range(order), key=lambda k: (w[k], k)))
        counts[pattern] = counts.get(pattern, 0) + 1
    total = sum(counts.values())
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def lz76_phrase_oracle(bits) -> int:
    """LZ76 phrase count via Python substring search: a phrase grows while it
    can be copied from the text before its last symbol; a trailing phrase that
    never stops being copyable is not counted."""
    s = "".join("1" if b else "0" for b in bits)
    n = len(s)
    c = 0
    l = 0
    while l < n:
        k = 0
        while l + k < n and s[l : l + k + 1] in s[0 : l + k]:
            k += 1
        if l + k >= n and l > 0:
            break
        c += 1
        l += k + 1
    return c


def lz76_oracle(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    bits = x > np.median(x)
    c = lz76_phrase_oracle(bits)
    return c * math.log2(len(x)) / len(x)


def mann_whitney_exact_oracle(a, b):
    """Exact Mann-Whitney by full enumeration, computing each assignment's U
    by direct pairwise comparison (ties count one half) rather than ranks.

    Returns (u_statistic, p_two_sided, p_greater, p_less)."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    pooled = a + b
    n1, n = len(a), len(pooled)

    def u_of(first, second):
        u = 0.0
        for x in first:
            for y in second:
                if x > y:
                    u += 1.0
                elif x == y:
                    u += 0.5
        return u

    u_obs = u_of(a, b)
    count_ge = count_le = total = 0
    for combo in itertools.combinations(range(n), n1):
        chosen = set(combo)
        first = [pooled[i] for i in combo]
        second = [pooled[i] for i in range(n) if i not in chosen]
        u = u_of(first, second)
        total += 1
        if u >= u_obs - 1e-12:
            count_ge += 1
        if u <= u_obs + 1e-12:
            count_le += 1
    p_greater = count_ge / total
    p_less = count_le / total
    p_two = min(1.0, 2.0 * min(p_greater, p_less))
    return u_obs, p_two, p_greater, p_less


def svd_entropy_oracle(x, embed_dim=3, delay=1):
    """SVD entropy via np.linalg.svd of the embedding matrix itself (the
    library goes through the 3x3 Gram eigenvalues instead)."""
    x = np.asarray(x, dtype=np.float64)
    span = (embed_dim - 1) * delay
    rows = [x[i : i + span + 1 : delay] for i in range(x.shape[0] - span)]
    Y = np.asarray(rows)
    sigma = np.linalg.svd(Y, compute_uv=False)
    total = sigma.sum()
    if total == 0.0:
        return 0.0
    p = sigma / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())
