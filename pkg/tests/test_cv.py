import warnings

import numpy as np
import pytest

from wavemark.cv import cross_validate, kfold_split, ttest_selector
from wavemark.synth import SynthSpec, gen_two_group


def test_balanced_folds():
    y = np.array([0, 1] * 5)
    folds = kfold_split(10, 5, y, seed=0)
    for f in range(5):
        assert sorted(y[folds == f]) == [0, 1]


@pytest.mark.parametrize("n0, n1, k", [(59, 31, 10), (20, 13, 5), (12, 12, 3)])
def test_stratified_fold_sizes(n0, n1, k):
    y = np.array([0] * n0 + [1] * n1)
    folds = kfold_split(len(y), k, y, seed=3)
    sizes = np.bincount(folds, minlength=k)
    assert sizes.max() - sizes.min() <= 1
    for c in (0, 1):
        per = np.bincount(folds[y == c], minlength=k)
        assert per.max() - per.min() <= 1


def test_leave_one_out_and_determinism():
    folds = kfold_split(7, 7, seed=1)
    assert sorted(folds) == list(range(7))
    a = kfold_split(30, 4, np.arange(30) % 2, seed=9)
    np.testing.assert_array_equal(a, kfold_split(30, 4, np.arange(30) % 2, seed=9))


def test_fold_errors_and_fallback():
    with pytest.raises(ValueError):
        kfold_split(10, 1)
    with pytest.raises(ValueError):
        kfold_split(3, 4)
    y = np.array([0] * 9 + [1] * 2)
    with pytest.warns(UserWarning):
        folds = kfold_split(11, 5, y, seed=0)
    assert np.bincount(folds).min() >= 2


def test_separable_data_bayes():
    g = gen_two_group(SynthSpec(n_per_group=(40, 40), d=3, planted={0: 12.0, 1: 12.0}, seed=0))
    rep = cross_validate(g.X, g.y, "bayes", k=5, repeats=10, seed=0)
    assert rep.mean_accuracy > 0.99
    assert len(rep.per_repeat_accuracy) == 10
    assert rep.failed_folds == []


def test_null_labels_give_chance_accuracy():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = rng.permutation([0] * 30 + [1] * 30)
    rep = cross_validate(X, y, "bayes", k=10, repeats=50, seed=1)
    assert abs(rep.mean_accuracy - 0.5) <= 0.05


def test_first_repeat_is_independent_of_repeat_count():
    g = gen_two_group(SynthSpec(n_per_group=(30, 20), d=10, planted={2: 1.0}, seed=2))
    one = cross_validate(g.X, g.y, "svm", k=5, repeats=1, seed=7)
    many = cross_validate(g.X, g.y, "svm", k=5, repeats=6, seed=7)
    assert one.per_repeat_accuracy[0] == many.per_repeat_accuracy[0]


def test_row_permutation_invariance_with_fixed_folds():
    g = gen_two_group(SynthSpec(n_per_group=(25, 25), d=4, planted={0: 1.0}, seed=3))
    folds = kfold_split(50, 5, g.y, seed=0)
    base = cross_validate(g.X, g.y, "bayes", repeats=1, folds=folds)
    perm = np.random.default_rng(1).permutation(50)
    moved = cross_validate(g.X[perm], g.y[perm], "bayes", repeats=1, folds=folds[perm])
    assert base.mean_accuracy == moved.mean_accuracy


def test_in_fold_selection_avoids_leak():
    # pure noise, many features: ranking on all rows inflates accuracy, in-fold ranking does not
    g = gen_two_group(SynthSpec(n_per_group=(20, 20), d=400, seed=5))
    sel = ttest_selector(5)
    leak = cross_validate(g.X, g.y, "bayes", k=5, repeats=5, seed=0, selector=sel, selection_scope="global")
    clean = cross_validate(g.X, g.y, "bayes", k=5, repeats=5, seed=0, selector=sel, selection_scope="fold")
    assert leak.mean_accuracy > clean.mean_accuracy + 0.15
    assert clean.selection_scope == "fold" and leak.selection_scope == "global"
    row = clean.to_row(l=5)
    assert row["l"] == 5 and row["feature_spec"] == "ttest_top5"


def test_failed_folds_are_recorded():
    X = np.zeros((10, 1))
    X[:, 0] = np.arange(10.0)
    y = np.array([0] * 5 + [1] * 5)
    folds = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])  # each training fold is single-class
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = cross_validate(X, y, "svm", repeats=1, folds=folds)
    assert len(rep.failed_folds) == 2
    assert np.isnan(rep.mean_accuracy)


def test_cv_input_errors():
    with pytest.raises(ValueError):
        cross_validate(np.ones((4, 2)), [0, 1, 0])
    with pytest.raises(ValueError):
        cross_validate(np.ones((4, 2)), [0, 1, 0, 1], selection_scope="both")
