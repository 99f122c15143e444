"""Univariate two-group feature ranking (pooled t-test, Wilcoxon rank-sum)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class RankedFeatures:
    order: np.ndarray
    statistic: np.ndarray
    p_value: np.ndarray
    degenerate: np.ndarray  # features with no usable variance, forced to the end

    def __len__(self) -> int:
        return len(self.order)


def _rank(statistic: np.ndarray, p_value: np.ndarray, degenerate: np.ndarray) -> RankedFeatures:
    idx = np.arange(len(p_value))
    # lexsort: last key is primary
    order = np.lexsort((idx, -np.abs(statistic), p_value, degenerate))
    return RankedFeatures(order, statistic, p_value, degenerate)


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A[:, None] if A.ndim == 1 else A


def t_test_rank(A, B) -> RankedFeatures:
    """Equal-variance two-sample t-test per column, two-sided.

    ``statistic`` is positive when the mean of ``A`` exceeds that of ``B``.
    Columns with zero pooled variance get ``t = 0``, ``p = 1`` and rank last.
    """
    A, B = _as_2d(A), _as_2d(B)
    m1, m2 = A.shape[0], B.shape[0]
    if m1 < 2 or m2 < 2:
        raise ValueError("each group needs at least two samples")
    if A.shape[1] != B.shape[1]:
        raise ValueError("groups must have the same feature count")
    df = m1 + m2 - 2
    ss = A.var(axis=0, ddof=1) * (m1 - 1) + B.var(axis=0, ddof=1) * (m2 - 1)
    pooled = ss / df
    diff = A.mean(axis=0) - B.mean(axis=0)
    se = np.sqrt(pooled * (1.0 / m1 + 1.0 / m2))
    degenerate = ~(se > 0)
    t = np.zeros_like(diff)
    np.divide(diff, se, out=t, where=~degenerate)
    p = np.where(degenerate, 1.0, 2.0 * stats.t.sf(np.abs(t), df))
    return _rank(t, np.minimum(p, 1.0), degenerate)


def wilcoxon_rank(A, B) -> RankedFeatures:
    """Rank-sum test per column; ``statistic`` is the rank sum of ``A``.

    Midranks for ties, normal approximation with tie-corrected variance and
    continuity correction.
    """
    A, B = _as_2d(A), _as_2d(B)
    m1, m2 = A.shape[0], B.shape[0]
    if m1 < 1 or m2 < 1:
        raise ValueError("each group needs at least one sample")
    if A.shape[1] != B.shape[1]:
        raise ValueError("groups must have the same feature count")
    N = m1 + m2
    pooled = np.vstack([A, B])
    ranks = stats.rankdata(pooled, axis=0)
    W = ranks[:m1].sum(axis=0)
    mean = m1 * (N + 1) / 2.0
    tie = np.zeros(pooled.shape[1])
    for j in range(pooled.shape[1]):
        _, counts = np.unique(pooled[:, j], return_counts=True)
        tie[j] = np.sum(counts ** 3 - counts)
    var = m1 * m2 / 12.0 * ((N + 1) - (tie / (N * (N - 1)) if N > 1 else 0.0))
    degenerate = ~(var > 0)
    z = np.zeros_like(W)
    num = np.maximum(np.abs(W - mean) - 0.5, 0.0)
    np.divide(num, np.sqrt(np.where(degenerate, 1.0, var)), out=z, where=~degenerate)
    p = np.where(degenerate, 1.0, np.minimum(2.0 * stats.norm.sf(z), 1.0))
    return _rank(W, p, degenerate)


def rank_features(X, y, method: str = "ttest", positive=None) -> RankedFeatures:
    """Rank columns of ``X`` by separation between the two labels in ``y``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    labels = np.unique(y)
    if len(labels) != 2:
        raise ValueError("ranking needs exactly two classes")
    first = labels[0] if positive is None else positive
    A, B = X[y == first], X[y != first]
    if method == "ttest":
        return t_test_rank(A, B)
    if method == "wilcoxon":
        return wilcoxon_rank(A, B)
    raise ValueError(f"unknown ranking method {method!r}")


def top_k(r: RankedFeatures, k: int) -> list[int]:
    if not 1 <= k <= len(r.order):
        raise ValueError(f"k must be in 1..{len(r.order)}, got {k}")
    return [int(i) for i in r.order[:k]]
