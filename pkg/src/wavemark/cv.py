"""Repeated stratified k-fold evaluation with optional in-fold feature selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifiers import bayes_classify, bayes_fit, svm_classify, svm_fit
from .ranking import rank_features, top_k

Selector = Callable[[np.ndarray, np.ndarray, np.random.Generator], Sequence[int]]


@dataclass
class CvReport:
    k: int
    repeats: int
    per_repeat_accuracy: list[float]
    mean_accuracy: float
    std_accuracy: float
    classifier_tag: str
    feature_spec: str
    selection_scope: str = "fold"
    failed_folds: list[tuple[int, int, str]] = field(default_factory=list)

    def to_row(self, **extra) -> dict:
        return {**extra, "feature_spec": self.feature_spec, "classifier": self.classifier_tag,
                "selection_scope": self.selection_scope, "k": self.k, "repeats": self.repeats,
                "mean_accuracy": self.mean_accuracy, "std_accuracy": self.std_accuracy,
                "failed_folds": len(self.failed_folds)}


def kfold_split(n: int, k: int, labels=None, seed=0) -> np.ndarray:
    """Fold id (0..k-1) per sample.

    Stratified when ``labels`` is given and every class has at least ``k``
    members; otherwise a plain shuffled split (with a warning if stratification
    was requested but impossible).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds sample count {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    if labels is not None:
        labels = np.asarray(labels)
        classes, counts = np.unique(labels, return_counts=True)
        if counts.min() >= k:
            offset = 0
            for c in classes:
                idx = rng.permutation(np.flatnonzero(labels == c))
                # continue the round-robin where the previous class stopped, keeping totals balanced
                folds[idx] = (offset + np.arange(len(idx))) % k
                offset = (offset + len(idx)) % k
            return folds
        warnings.warn(f"a class has fewer than k={k} members; using unstratified folds", stacklevel=2)
    perm = rng.permutation(n)
    folds[perm] = np.arange(n) % k
    return folds


def ttest_selector(n_features: int, method: str = "ttest") -> Selector:
    def select(X, y, rng):
        return top_k(rank_features(X, y, method), n_features)
    select.__name__ = f"{method}_top{n_features}"
    return select


def _fit_predict(classifier: str, Xtr, ytr, Xte):
    if classifier == "bayes":
        return np.atleast_1d(bayes_classify(bayes_fit(Xtr, ytr), Xte))
    if classifier == "svm":
        return np.atleast_1d(svm_classify(svm_fit(Xtr, ytr), Xte))
    raise ValueError(f"unknown classifier {classifier!r}")


def cross_validate(features, y, classifier: str = "svm", k: int = 10, repeats: int = 50,
                   seed: int = 0, selector: Selector | None = None, selection_scope: str = "fold",
                   feature_spec: str = "", folds: np.ndarray | None = None) -> CvReport:
    """Accuracy over ``repeats`` reshuffled k-fold partitions.

    ``selector`` (X, y, rng) -> column indices is refit on each training fold
    when ``selection_scope == "fold"`` and once on all rows when ``"global"``.
    Passing ``folds`` fixes the assignment for every repeat.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(y)
    if X.shape[0] != len(y):
        raise ValueError("features and labels must be row-aligned")
    if selection_scope not in ("fold", "global"):
        raise ValueError("selection_scope must be 'fold' or 'global'")
    streams = np.random.SeedSequence(seed).spawn(repeats)
    global_cols = None
    if selector is not None and selection_scope == "global":
        global_cols = np.asarray(selector(X, y, np.random.default_rng(seed)), dtype=int)

    accs, failed = [], []
    for r, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        assign = folds if folds is not None else kfold_split(len(y), k, y, rng)
        correct = total = 0
        for f in range(int(assign.max()) + 1):
            test = assign == f
            train = ~test
            try:
                if global_cols is not None:
                    cols = global_cols
                elif selector is not None:
                    cols = np.asarray(selector(X[train], y[train], rng), dtype=int)
                else:
                    cols = slice(None)
                pred = _fit_predict(classifier, X[train][:, cols], y[train], X[test][:, cols])
            except (ValueError, np.linalg.LinAlgError) as exc:
                failed.append((r, f, str(exc)))
                continue
            correct += int(np.sum(pred == y[test]))
            total += int(test.sum())
        accs.append(correct / total if total else float("nan"))

    acc = np.asarray(accs)
    valid = acc[np.isfinite(acc)]
    spec = feature_spec or (getattr(selector, "__name__", "all") if selector else "all")
    return CvReport(k=int(assign.max()) + 1, repeats=repeats, per_repeat_accuracy=[float(a) for a in acc],
                    mean_accuracy=float(valid.mean()) if valid.size else float("nan"),
                    std_accuracy=float(valid.std(ddof=1)) if valid.size > 1 else 0.0,
                    classifier_tag=classifier, feature_spec=spec,
                    selection_scope=selection_scope if selector else "none", failed_folds=failed)
