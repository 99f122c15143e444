"""Kaplan-Meier curves, log-rank test, restricted mean, Breslow Cox regression
and the censoring-bias diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats


class SurvivalError(ValueError):
    pass


class ConvergenceError(SurvivalError):
    pass


@dataclass
class SurvivalData:
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray | None = None
    group: np.ndarray | None = None
    covariate_names: list[str] | None = None

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=bool)
        if self.time.ndim != 1 or self.time.shape != self.event.shape:
            raise SurvivalError("time and event must be 1-D and of equal length")
        if np.any(self.time < 0) or not np.all(np.isfinite(self.time)):
            raise SurvivalError("times must be finite and non-negative")
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != len(self.time):
                raise SurvivalError("covariates need one row per subject")
            self.covariates = cov
            if self.covariate_names is None:
                self.covariate_names = [f"x{i}" for i in range(cov.shape[1])]
        if self.group is not None:
            self.group = np.asarray(self.group)

    def __len__(self) -> int:
        return len(self.time)

    def subset(self, mask) -> "SurvivalData":
        mask = np.asarray(mask)
        return SurvivalData(
            self.time[mask], self.event[mask],
            None if self.covariates is None else self.covariates[mask],
            None if self.group is None else self.group[mask],
            self.covariate_names,
        )


# ---------------------------------------------------------------------------
# Kaplan-Meier


@dataclass
class KMCurve:
    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray
    variance: np.ndarray
    last_time: float  # largest observed time, event or censored
    n: int = 0

    def at(self, t) -> np.ndarray:
        """Step-function value S(t) (right-continuous)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        s = np.concatenate([[1.0], self.survival])
        return s[idx]


def _event_table(time: np.ndarray, event: np.ndarray):
    """Distinct event times with deaths and number at risk (censored ties stay at risk)."""
    t_ev = np.unique(time[event])
    sorted_t = np.sort(time)
    at_risk = len(time) - np.searchsorted(sorted_t, t_ev, side="left")
    ev_sorted = np.sort(time[event])
    deaths = np.searchsorted(ev_sorted, t_ev, side="right") - np.searchsorted(ev_sorted, t_ev, side="left")
    return t_ev, deaths.astype(float), at_risk.astype(float)


def km_estimate(d: SurvivalData) -> KMCurve:
    """Product-limit estimate with Greenwood variance.

    Where every subject at risk dies (S drops to 0) the Greenwood term is
    undefined; the variance is reported as 0 there and afterwards.
    """
    if len(d) == 0:
        raise SurvivalError("no subjects")
    t, dth, nr = _event_table(d.time, d.event)
    surv = np.cumprod((nr - dth) / nr)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(nr > dth, dth / (nr * (nr - dth)), 0.0)
    var = surv ** 2 * np.cumsum(term)
    var[surv == 0] = 0.0
    return KMCurve(t, surv, nr.astype(int), dth.astype(int), var, float(d.time.max()), len(d))


class RestrictedMean(NamedTuple):
    mean: float
    se: float
    ci95: tuple[float, float]


def restricted_mean(c: KMCurve, horizon: float | None = None) -> RestrictedMean:
    """Area under the KM curve on ``[0, horizon]`` with its standard error.

    ``horizon`` defaults to the largest observed time.
    """
    if horizon is None:
        horizon = c.last_time
    if horizon > c.last_time + 1e-12:
        raise SurvivalError(f"horizon {horizon} is beyond the last observed time {c.last_time}")
    if horizon < 0:
        raise SurvivalError("horizon must be non-negative")
    keep = c.times <= horizon
    t = c.times[keep]
    s = c.survival[keep]
    knots = np.concatenate([[0.0], t, [horizon]])
    levels = np.concatenate([[1.0], s])
    widths = np.diff(knots)
    mean = float(np.sum(levels * widths))
    # A_i = area under S from t_i to the horizon
    tail = np.cumsum((levels * widths)[::-1])[::-1][1:]
    dth = c.deaths[keep].astype(float)
    nr = c.at_risk[keep].astype(float)
    ok = nr > dth
    var = float(np.sum(tail[ok] ** 2 * dth[ok] / (nr[ok] * (nr[ok] - dth[ok]))))
    se = float(np.sqrt(var))
    return RestrictedMean(mean, se, (mean - 1.96 * se, mean + 1.96 * se))


# ---------------------------------------------------------------------------
# log-rank


class LogRankResult(NamedTuple):
    chi2: float
    p_value: float
    observed_a: float
    expected_a: float


def log_rank(a: SurvivalData, b: SurvivalData) -> LogRankResult:
    if len(a) == 0 or len(b) == 0:
        raise SurvivalError("both groups must be non-empty")
    time = np.concatenate([a.time, b.time])
    event = np.concatenate([a.event, b.event])
    in_a = np.concatenate([np.ones(len(a), bool), np.zeros(len(b), bool)])
    if not event.any():
        raise SurvivalError("no events in either group")
    t, dth, nr = _event_table(time, event)
    sorted_a = np.sort(a.time)
    nr_a = (len(a) - np.searchsorted(sorted_a, t, side="left")).astype(float)
    ev_a = np.sort(time[event & in_a])
    d_a = (np.searchsorted(ev_a, t, side="right") - np.searchsorted(ev_a, t, side="left")).astype(float)
    expected = nr_a * dth / nr
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(nr > 1, nr_a * (nr - nr_a) * dth * (nr - dth) / (nr ** 2 * (nr - 1)), 0.0)
    V = float(var.sum())
    if V <= 0:
        raise SurvivalError("log-rank variance is zero")
    O, E = float(d_a.sum()), float(expected.sum())
    chi2 = (O - E) ** 2 / V
    return LogRankResult(chi2, float(stats.chi2.sf(chi2, 1)), O, E)


# ---------------------------------------------------------------------------
# Cox proportional hazards (Breslow ties)


@dataclass
class CoxFit:
    beta: np.ndarray
    cov: np.ndarray
    hazard_ratios: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_values: np.ndarray
    log_partial_likelihood: float
    iterations: int
    converged: bool
    gradient_norm: float
    names: list[str] = field(default_factory=list)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def table(self) -> list[dict]:
        return [
            {"variable": n, "beta": float(b), "hazard_ratio": float(hr), "p_value": float(p),
             "ci_lower": float(lo), "ci_upper": float(hi)}
            for n, b, hr, p, lo, hi in zip(self.names, self.beta, self.hazard_ratios,
                                           self.p_values, self.ci_lower, self.ci_upper)
        ]


class _CoxProblem:
    """Breslow log partial likelihood, gradient and Hessian for fixed data."""

    def __init__(self, time: np.ndarray, event: np.ndarray, X: np.ndarray):
        order = np.argsort(-time, kind="stable")
        self.t = time[order]
        self.e = event[order]
        self.X = X[order]
        # risk set for subject k (descending order) = rows 0..last[k], last[k] = end of its tie block
        _, first_idx = np.unique(-self.t, return_index=True)
        block_end = np.append(first_idx[1:], len(self.t)) - 1
        block_of = np.repeat(np.arange(len(first_idx)), np.diff(np.append(first_idx, len(self.t))))
        self.last = block_end[block_of]

    def evaluate(self, beta: np.ndarray, want_hessian: bool = True):
        X, e, last = self.X, self.e, self.last
        eta = X @ beta
        c = eta.max()
        w = np.exp(eta - c)
        S0 = np.cumsum(w)[last]
        S1 = np.cumsum(w[:, None] * X, axis=0)[last]
        ll = float(np.sum(eta[e] - c - np.log(S0[e])))
        mean = S1[e] / S0[e][:, None]
        grad = X[e].sum(axis=0) - mean.sum(axis=0)
        if not want_hessian:
            return ll, grad, None
        S2 = np.cumsum(w[:, None, None] * X[:, :, None] * X[:, None, :], axis=0)[last]
        H = -(S2[e] / S0[e][:, None, None] - mean[:, :, None] * mean[:, None, :]).sum(axis=0)
        return ll, grad, H


def cox_partial_loglik(d: SurvivalData, beta) -> tuple[float, np.ndarray]:
    """Breslow log partial likelihood and its analytic gradient at ``beta``."""
    X = d.covariates
    if X is None:
        raise SurvivalError("Cox model needs covariates")
    ll, g, _ = _CoxProblem(d.time, d.event, X).evaluate(np.asarray(beta, dtype=float), want_hessian=False)
    return ll, g


def cox_fit(d: SurvivalData, max_iter: int = 100, tol: float = 1e-8, max_abs_beta: float = 50.0) -> CoxFit:
    """Newton-Raphson from beta = 0 with step halving.

    Converged when the gradient's infinity norm drops below ``tol``.
    Divergence of any coefficient past ``max_abs_beta`` (monotone likelihood,
    usually a covariate that separates events) raises ``ConvergenceError``, as
    does a gradient that vanished while the Newton step stayed large, which is
    the same situation caught before ``max_abs_beta`` is reached.
    """
    if d.covariates is None:
        raise SurvivalError("Cox model needs covariates")
    if not d.event.any():
        raise SurvivalError("Cox model needs at least one event")
    X = d.covariates
    if not np.all(np.isfinite(X)):
        raise SurvivalError("covariates must be finite")
    names = list(d.covariate_names or [f"x{i}" for i in range(X.shape[1])])
    Xc = X - X.mean(axis=0)  # centring leaves beta unchanged and keeps exp() tame
    prob = _CoxProblem(d.time, d.event, Xc)
    p = X.shape[1]
    beta = np.zeros(p)
    ll, grad, H = prob.evaluate(beta)
    converged = False
    it = 0
    while True:
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            raise SurvivalError("information matrix is singular") from None
        for _ in range(30):
            cand = beta + step
            ll_new, g_new, H_new = prob.evaluate(cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            break  # no ascent possible at machine precision
        beta, ll, grad, H = cand, ll_new, g_new, H_new
        big = np.flatnonzero(np.abs(beta) > max_abs_beta)
        if big.size:
            _diverged(names[big[0]], max_abs_beta)
    if converged:
        try:
            last_step = np.abs(np.linalg.solve(-H, grad))
        except np.linalg.LinAlgError:
            raise SurvivalError("information matrix is singular") from None
        if np.any(last_step > 1e-3):
            _diverged(names[int(np.argmax(last_step))], max_abs_beta)
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        raise SurvivalError("information matrix is singular") from None
    if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0):
        raise SurvivalError("information matrix is singular")
    se = np.sqrt(np.diag(cov))
    z = beta / se
    return CoxFit(
        beta=beta, cov=cov, hazard_ratios=np.exp(beta),
        ci_lower=np.exp(beta - 1.96 * se), ci_upper=np.exp(beta + 1.96 * se),
        p_values=2 * stats.norm.sf(np.abs(z)),
        log_partial_likelihood=ll, iterations=it, converged=bool(converged),
        gradient_norm=float(np.max(np.abs(grad))), names=names,
    )


def _diverged(name: str, limit: float):
    raise ConvergenceError(
        f"coefficient for {name!r} diverged (partial likelihood is monotone, |beta| heading past {limit}); "
        "the covariate likely separates events from non-events")


def risk_ratio(fit: CoxFit, x1, x2) -> float:
    """Hazard ratio between covariate vectors; no time argument, by construction."""
    return float(np.exp(fit.beta @ (np.asarray(x1, float) - np.asarray(x2, float))))


# ---------------------------------------------------------------------------
# censoring bias


@dataclass
class BiasSeries:
    times: np.ndarray
    p: np.ndarray
    p_adjusted: np.ndarray
    bias: np.ndarray
    deltas: np.ndarray


def censoring_bias(c: KMCurve, deltas) -> BiasSeries:
    """Shift in each KM factor if ``deltas[i]`` extra subjects had died at ``t_i``.

    ``p' = 1 - (d + dx) / (n - dx)`` and ``b = p' - p`` with ``p = 1 - d / n``.
    """
    dx = np.broadcast_to(np.asarray(deltas, dtype=float), c.times.shape).copy()
    n = c.at_risk.astype(float)
    dth = c.deaths.astype(float)
    if np.any(dx < 0):
        raise SurvivalError("deltas must be non-negative")
    bad = np.flatnonzero(dx >= n)
    if bad.size:
        i = bad[0]
        raise SurvivalError(f"delta {dx[i]:g} at t={c.times[i]:g} is not below the {int(n[i])} at risk")
    p = 1.0 - dth / n
    p_adj = 1.0 - (dth + dx) / (n - dx)
    return BiasSeries(c.times.copy(), p, p_adj, p_adj - p, dx)


# ---------------------------------------------------------------------------
# grouping


def dichotomize(d: SurvivalData, marker, split: Sequence) -> tuple[SurvivalData, SurvivalData]:
    """Split subjects by whether their category for ``marker`` lies in ``split``.

    ``marker`` is a covariate column index/name or a per-subject array of categories.
    """
    if isinstance(marker, (int, np.integer)):
        cats = d.covariates[:, int(marker)]
    elif isinstance(marker, str):
        cats = d.covariates[:, d.covariate_names.index(marker)]
    else:
        cats = np.asarray(marker)
        if len(cats) != len(d):
            raise SurvivalError("category vector must have one entry per subject")
    in_a = np.isin(cats, list(split))
    if in_a.all() or not in_a.any():
        raise SurvivalError(f"split {sorted(split)} leaves one side empty")
    return d.subset(in_a), d.subset(~in_a)
