"""Two-sided Wilcoxon signed-rank test.

Zero differences are dropped. Ties in ``|d|`` get mid-ranks; the statistic is
kept in doubled-rank units so the exact null distribution is an integer
subset-sum count. Samples of at most ``EXACT_MAX_N`` pairs use that exact
distribution, larger ones a normal approximation with tie correction.
"""

from __future__ import annotations

import math

import numpy as np

from . import _backend
from .errors import DimensionMismatch, TooFewPairs

EXACT_MAX_N = 20
MIN_PAIRS = 5


def doubled_ranks(values: np.ndarray) -> np.ndarray:
    """Twice the mid-ranks of ``values`` (ascending, 1-based), as integers."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks2 = np.empty(values.shape[0], dtype=np.int64)
    sorted_vals = values[order]
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j share rank (i+1 + j+1)/2, doubled
        ranks2[order[i : j + 1]] = i + j + 2
        i = j + 1
    return ranks2


def signed_rank_statistic(a, b) -> tuple[int, np.ndarray]:
    """``(2 * T+, doubled ranks)`` of the non-zero differences ``a - b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch("wilcoxon needs two vectors of equal length")
    d = a - b
    d = d[d != 0]
    if d.shape[0] < MIN_PAIRS:
        raise TooFewPairs(f"need at least {MIN_PAIRS} non-zero differences, got {d.shape[0]}")
    r2 = doubled_ranks(np.abs(d))
    return int(r2[d > 0].sum()), r2


def exact_p_value(t2: int, ranks2: np.ndarray) -> float:
    counts = _backend.signed_rank_counts(ranks2)
    total = 2 ** ranks2.shape[0]
    lower = int(counts[: t2 + 1].sum())
    upper = int(counts[t2:].sum())
    return min(1.0, 2 * min(lower, upper) / total)


def normal_p_value(t2: int, ranks2: np.ndarray) -> float:
    n = ranks2.shape[0]
    t = t2 / 2.0
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks2, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    z = abs(t - mean) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value for the paired samples ``a`` and ``b``."""
    t2, ranks2 = signed_rank_statistic(a, b)
    if ranks2.shape[0] <= EXACT_MAX_N:
        return exact_p_value(t2, ranks2)
    return normal_p_value(t2, ranks2)
