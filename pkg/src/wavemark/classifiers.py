"""Gaussian Bayes classifier with pooled covariance and a linear SMO-trained SVM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

RIDGE_START = 1e-6
RIDGE_MAX = 1e-2
COND_LIMIT = 1e10


@dataclass(frozen=True)
class BayesModel:
    means: np.ndarray  # c x l
    pooled_cov: np.ndarray  # l x l, after any ridge
    priors: np.ndarray
    class_labels: np.ndarray
    ridge: float = 0.0
    chol: np.ndarray | None = None  # lower Cholesky factor of pooled_cov

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


def _regularize(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    l = cov.shape[0]
    scale = np.trace(cov) / l
    if not scale > 0:
        scale = 1.0
    eps = 0.0
    while True:
        trial = cov + eps * scale * np.eye(l) if eps else cov
        ev = np.linalg.eigvalsh(trial)
        if ev[0] > 0 and ev[-1] / ev[0] <= COND_LIMIT:
            try:
                return trial, np.linalg.cholesky(trial), eps
            except np.linalg.LinAlgError:
                pass
        if eps >= RIDGE_MAX:
            raise np.linalg.LinAlgError("pooled covariance could not be regularised")
        eps = RIDGE_START if eps == 0 else min(eps * 10, RIDGE_MAX)


def bayes_fit(X, y) -> BayesModel:
    """Class means, pooled within-class covariance and empirical priors.

    A ridge of ``eps * trace/l`` (eps = 1e-6, 1e-5, ... 1e-2) is added when the
    pooled matrix is ill-conditioned or not positive definite.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    labels, counts = np.unique(y, return_counts=True)
    if np.any(counts < 2):
        raise ValueError(f"every class needs at least 2 samples, got counts {dict(zip(labels.tolist(), counts.tolist()))}")
    m, l = X.shape
    c = len(labels)
    if m - c < 1:
        raise ValueError("not enough samples to pool covariance")
    means = np.vstack([X[y == lab].mean(axis=0) for lab in labels])
    resid = X - means[np.searchsorted(labels, y)]
    cov = resid.T @ resid / (m - c)
    cov = (cov + cov.T) / 2
    cov, chol, eps = _regularize(cov)
    return BayesModel(means, cov, counts / m, labels, eps, chol)


def _log_joint(model: BayesModel, X: np.ndarray) -> np.ndarray:
    L = model.chol if model.chol is not None else np.linalg.cholesky(model.pooled_cov)
    l = model.n_features
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    out = np.empty((X.shape[0], len(model.class_labels)))
    for i, mu in enumerate(model.means):
        z = solve_triangular(L, (X - mu).T, lower=True, check_finite=False)
        maha = np.sum(z * z, axis=0)
        out[:, i] = -0.5 * maha - 0.5 * logdet - 0.5 * l * np.log(2 * np.pi) + np.log(model.priors[i])
    return out


def _as_rows(model: BayesModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1 and (model.n_features > 1 or x.size == 1)
    if x.ndim == 1:
        x = x[None, :] if single else x[:, None]
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    return x, single


def bayes_posterior(model: BayesModel, x) -> np.ndarray:
    """Class posteriors for one vector (shape ``(c,)``) or a matrix (``(m, c)``)."""
    X, single = _as_rows(model, x)
    lj = _log_joint(model, X)
    post = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return post[0] if single else post


def bayes_classify(model: BayesModel, x):
    """Maximum-posterior label; ties go to the lowest class index."""
    X, single = _as_rows(model, x)
    idx = np.argmax(_log_joint(model, X), axis=1)
    labels = model.class_labels[idx]
    return labels[0] if single else labels


# ---------------------------------------------------------------------------
# linear SVM


class SvmError(ValueError):
    pass


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray  # in standardised feature space
    bias: float
    support_indices: np.ndarray
    C: float
    alphas: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    classes: np.ndarray  # (negative, positive)
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} features, got {X.shape[1]}")
        out = ((X - self.center) / self.scale) @ self.weights + self.bias
        return out[0] if single else out


def svm_fit(X, y, C: float = 1.0, tol: float = 1e-3, max_iter: int = 100_000) -> SvmModel:
    """Soft-margin linear SVM solved in the dual by SMO.

    Working pairs are the maximal KKT violators (first-order selection); the
    loop stops when the violation gap falls below ``tol``.  Features are
    standardised with training statistics before solving.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y_raw = np.asarray(y)
    classes = np.unique(y_raw)
    if len(classes) != 2:
        raise SvmError("SVM training needs exactly two classes")
    if C <= 0:
        raise ValueError("C must be positive")
    yy = np.where(y_raw == classes[1], 1.0, -1.0)
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    n = len(yy)

    Q = (yy[:, None] * yy[None, :]) * (Z @ Z.T)
    diag = np.diag(Q).copy()
    pos = yy > 0
    alpha = np.zeros(n)
    score = yy.copy()  # -y * gradient of 0.5 a'Qa - sum(a), at alpha = 0
    it = 0
    while it < max_iter:
        at_zero = alpha <= 0
        at_c = alpha >= C
        # I_up: may move up along y; I_low: may move down
        up = np.where(pos, ~at_c, ~at_zero)
        low = np.where(pos, ~at_zero, ~at_c)
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap < tol:
            break
        # move along y_i d_i + y_j d_j = 0
        quad = max(diag[i] + diag[j] - 2 * yy[i] * yy[j] * Q[i, j], 1e-12)
        ti = C - alpha[i] if pos[i] else alpha[i]
        tj = alpha[j] if pos[j] else C - alpha[j]
        t = min(gap / quad, ti, tj)
        alpha[i] += yy[i] * t
        alpha[j] -= yy[j] * t
        if t == ti:  # snap to the box so the masks see the bound exactly
            alpha[i] = C if pos[i] else 0.0
        if t == tj:
            alpha[j] = 0.0 if pos[j] else C
        # score = -y * grad and grad moves by Q[:, i] d_i + Q[:, j] d_j
        score -= yy * (Q[:, i] * (yy[i] * t) - Q[:, j] * (yy[j] * t))
        it += 1

    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        b = float(np.mean(score[free]))
    else:
        up = ((yy > 0) & (alpha < C)) | ((yy < 0) & (alpha > 0))
        low = ((yy > 0) & (alpha > 0)) | ((yy < 0) & (alpha < C))
        hi = score[up].max() if up.any() else score[low].min()
        lo = score[low].min() if low.any() else hi
        b = float((hi + lo) / 2)
    w = (alpha * yy) @ Z
    sv = np.flatnonzero(alpha > 1e-12)
    return SvmModel(w, b, sv, C, alpha, center, scale, classes, it)


def svm_classify(model: SvmModel, x):
    """Sign of the decision value; zero maps to the positive class."""
    f = model.decision_function(x)
    labels = np.where(np.asarray(f) >= 0, model.classes[1], model.classes[0])
    return labels if labels.ndim else labels[()]


def svm_dual_objective(model: SvmModel, X, y) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    yy = np.where(np.asarray(y) == model.classes[1], 1.0, -1.0)
    Z = (X - model.center) / model.scale
    v = (model.alphas * yy) @ Z
    return float(model.alphas.sum() - 0.5 * v @ v)
