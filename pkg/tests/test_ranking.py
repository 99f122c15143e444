from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from wavemark.ranking import _rank, rank_features, t_test_rank, top_k, wilcoxon_rank


def _planted(seed, shift=2.0, n=30, d=20, index=5):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, d))
    B = rng.normal(size=(n, d))
    B[:, index] += shift
    return A, B


def test_ttest_matches_scipy():
    A, B = _planted(0)
    r = t_test_rank(A, B)
    ref = stats.ttest_ind(A, B, equal_var=True)
    np.testing.assert_allclose(r.statistic, ref.statistic, rtol=1e-12)
    np.testing.assert_allclose(r.p_value, ref.pvalue, rtol=1e-10)


def test_identical_groups():
    A = np.random.default_rng(1).normal(size=(8, 4))
    r = t_test_rank(A, A.copy())
    np.testing.assert_array_equal(r.statistic, 0)
    np.testing.assert_array_equal(r.p_value, 1)
    w = wilcoxon_rank(A, A.copy())
    np.testing.assert_array_equal(w.p_value, 1)


def test_zero_variance_feature_is_flagged_last():
    A = np.column_stack([np.zeros(4), [0.0, 1, 2, 3]])
    B = np.column_stack([np.ones(4), [5.0, 6, 7, 8]])
    r = t_test_rank(A, B)
    assert r.degenerate.tolist() == [True, False]
    assert r.p_value[0] == 1.0
    assert r.order.tolist() == [1, 0]


def test_ttest_needs_two_per_group():
    with pytest.raises(ValueError):
        t_test_rank(np.ones((1, 3)), np.ones((3, 3)))


def test_planted_feature_ranked_first_ttest():
    hits = sum(t_test_rank(*_planted(s)).order[0] == 5 for s in range(100))
    assert hits >= 95


def test_planted_feature_ranked_first_wilcoxon():
    hits = sum(wilcoxon_rank(*_planted(s)).order[0] == 5 for s in range(100))
    assert hits >= 90


def _exact_rank_sum_cdf(m1, m2, w):
    # count subsets of {1..N} of size m1 with sum <= w (no ties)
    N = m1 + m2
    count = sum(1 for c in combinations(range(1, N + 1), m1) if sum(c) <= w)
    return count / comb(N, m1)


def test_perfect_separation_exact_oracle():
    A = np.arange(10.0)[:, None]
    B = np.arange(10.0, 20.0)[:, None]
    r = wilcoxon_rank(A, B)
    assert r.statistic[0] == 55  # 1 + 2 + ... + 10, the minimum possible
    exact_two_sided = 2 * _exact_rank_sum_cdf(10, 10, 55)
    assert exact_two_sided == pytest.approx(2 / 184756)
    assert exact_two_sided < 0.001
    assert r.p_value[0] < 0.001


def test_wilcoxon_matches_scipy_asymptotic_with_ties():
    rng = np.random.default_rng(7)
    A = rng.integers(0, 5, size=(25, 6)).astype(float)
    B = rng.integers(1, 6, size=(18, 6)).astype(float)
    r = wilcoxon_rank(A, B)
    for j in range(6):
        ref = stats.mannwhitneyu(A[:, j], B[:, j], alternative="two-sided", method="asymptotic",
                                 use_continuity=True)
        assert r.p_value[j] == pytest.approx(ref.pvalue, rel=1e-10)
        assert r.statistic[j] - 25 * 26 / 2 == pytest.approx(ref.statistic)


def test_ranking_order_ties():
    stat = np.array([1.0, -3.0, 3.0, 2.0])
    p = np.array([0.5, 0.1, 0.1, 0.1])
    r = _rank(stat, p, np.zeros(4, bool))
    # equal p: larger |statistic| first, then lower index
    assert r.order.tolist() == [1, 2, 3, 0]
    flagged = _rank(stat, p, np.array([False, True, False, False]))
    assert flagged.order.tolist() == [2, 3, 0, 1]
    assert top_k(r, 3) == [1, 2, 3]


def test_top_k():
    r = t_test_rank(*_planted(3))
    assert top_k(r, 1) == [int(r.order[0])]
    assert sorted(top_k(r, 20)) == list(range(20))
    for bad in (0, 21):
        with pytest.raises(ValueError):
            top_k(r, bad)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_invariant_to_within_group_order(seed):
    A, B = _planted(seed, n=12, d=5, index=2)
    rng = np.random.default_rng(seed + 1)
    for ranker in (t_test_rank, wilcoxon_rank):
        r0 = ranker(A, B)
        r1 = ranker(A[rng.permutation(12)], B[rng.permutation(12)])
        np.testing.assert_allclose(r1.p_value, r0.p_value, rtol=1e-12)
        np.testing.assert_array_equal(r1.order, r0.order)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_ttest_sign_flip(seed):
    A, B = _planted(seed, n=9, d=4, index=1)
    r_ab, r_ba = t_test_rank(A, B), t_test_rank(B, A)
    np.testing.assert_allclose(r_ab.statistic, -r_ba.statistic)
    np.testing.assert_allclose(r_ab.p_value, r_ba.p_value)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_wilcoxon_monotone_invariance(seed):
    A, B = _planted(seed, n=10, d=4, index=0)
    f = lambda x: np.exp(x) * 3 + 1  # noqa: E731
    np.testing.assert_allclose(wilcoxon_rank(f(A), f(B)).p_value, wilcoxon_rank(A, B).p_value, rtol=1e-12)


def test_rank_features_labels():
    A, B = _planted(4)
    X = np.vstack([A, B])
    y = np.array([0] * 30 + [1] * 30)
    r = rank_features(X, y)
    np.testing.assert_allclose(r.statistic, t_test_rank(A, B).statistic)
    w = rank_features(X, y, "wilcoxon")
    assert w.order[0] == 5
    with pytest.raises(ValueError):
        rank_features(X, y, "anova")
    with pytest.raises(ValueError):
        rank_features(X, np.zeros(60))
