"""Synthetic cohorts with known ground truth.

All generators draw from ``numpy.random.Generator(PCG64(seed))`` so output is
reproducible bit-for-bit for a given seed and numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import GROUP_ALIVE, GROUP_DEAD, GroupedData, SampleTable, Status
from .survival import SurvivalData


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class SynthSpec:
    n_per_group: tuple[int, int] = (59, 31)
    d: int = 115
    planted: dict[int, float] = field(default_factory=dict)  # index -> shift in SD units
    correlation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for idx, eff in self.planted.items():
            if not 0 <= idx < self.d:
                raise ValueError(f"planted index {idx} outside 0..{self.d - 1}")
            if not np.isfinite(eff):
                raise ValueError("effect sizes must be finite")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must lie in [0, 1)")


@dataclass
class SurvSynthSpec:
    n: int = 200
    beta: tuple[float, ...] = (0.0,)
    baseline_rate: float = 0.02
    censor_rate: float = 0.0
    admin_cutoff: float | None = None
    binary_covariates: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.baseline_rate <= 0:
            raise ValueError("baseline_rate must be positive")
        if self.censor_rate < 0:
            raise ValueError("censor_rate must be non-negative")


def gen_two_group(spec: SynthSpec) -> GroupedData:
    """Gaussian features; group 1 (alive) gets the planted mean shifts."""
    rng = _rng(spec.seed)
    n0, n1 = spec.n_per_group
    n = n0 + n1
    Z = rng.standard_normal((n, spec.d))
    if spec.correlation > 0:
        common = rng.standard_normal((n, 1))
        Z = np.sqrt(spec.correlation) * common + np.sqrt(1 - spec.correlation) * Z
    y = np.array([GROUP_DEAD] * n0 + [GROUP_ALIVE] * n1)
    for idx, eff in spec.planted.items():
        Z[y == GROUP_ALIVE, idx] += eff
    names = [f"m{i:03d}" for i in range(spec.d)]
    return GroupedData(Z, y, names, [str(i) for i in range(n)])


def gen_survival(spec: SurvSynthSpec) -> SurvivalData:
    """Exponential event times with rate ``baseline * exp(beta'x)``, independent censoring."""
    rng = _rng(spec.seed)
    beta = np.asarray(spec.beta, dtype=float)
    p = len(beta)
    if spec.binary_covariates:
        X = rng.integers(0, 2, size=(spec.n, p)).astype(float)
    else:
        X = rng.standard_normal((spec.n, p))
    rate = spec.baseline_rate * np.exp(X @ beta)
    t_event = rng.exponential(1.0 / rate)
    if spec.censor_rate > 0:
        t_cens = rng.exponential(1.0 / spec.censor_rate, size=spec.n)
    else:
        t_cens = np.full(spec.n, np.inf)
    if spec.admin_cutoff is not None:
        t_cens = np.minimum(t_cens, spec.admin_cutoff)
    event = t_event <= t_cens
    return SurvivalData(np.minimum(t_event, t_cens), event, X)


# ---------------------------------------------------------------------------
# cohort shaped like a tissue-microarray marker table

COHORT_SHAPE = dict(n_samples=462, n_protein=115, n_clinical=25, n_sparse=70)
# 0-based positions among the protein markers that carry the group signal
PLANTED_PROTEIN_INDICES = (17, 52, 88)
PLANTED_EFFECT = 1.5


def protein_names(n: int = COHORT_SHAPE["n_protein"]) -> list[str]:
    return [f"prot_{i:03d}" for i in range(n)]


PLANTED_MARKERS = tuple(protein_names()[i] for i in PLANTED_PROTEIN_INDICES)


# complete rows by (status, survival window): the two analysis groups come out at 59 / 31
_COMPLETE_ROWS = (
    (0, (1.0, 30.0), 59),     # dead, short survival -> group 0
    (0, (30.0, 65.0), 17),    # dead, intermediate -> excluded
    (1, (1.0, 90.0), 18),     # dead of other causes -> excluded
    (2, (70.5, 111.0), 31),   # alive, long follow-up -> group 1
    (2, (38.0, 69.5), 28),    # alive, short follow-up -> excluded
)


def gen_paper_shape_cohort(seed: int = 0, effect: float = PLANTED_EFFECT) -> SampleTable:
    """462 x 210 table: 115 protein markers, 25 clinical descriptors, 70 sparse markers.

    A third of rows are complete over the 140 dense columns, the sparse
    markers are 75-95% missing, and the complete rows contain exactly 59
    short-survival deaths and 31 long-survival censored patients.  Three
    protein markers (``PLANTED_MARKERS``) are shifted by ``effect`` SDs
    between deaths and survivors.
    """
    rng = _rng(seed)
    n = COHORT_SHAPE["n_samples"]
    n_prot, n_clin, n_sparse = COHORT_SHAPE["n_protein"], COHORT_SHAPE["n_clinical"], COHORT_SHAPE["n_sparse"]
    n_complete = sum(c for _, _, c in _COMPLETE_ROWS)

    order = rng.permutation(n)
    complete_rows, other_rows = order[:n_complete], order[n_complete:]
    status = np.empty(n, dtype=int)  # 0 dead, 1 dead_other, 2 alive
    months = np.empty(n)
    pos = 0
    for st, (lo, hi), count in _COMPLETE_ROWS:
        rows = complete_rows[pos:pos + count]
        status[rows] = st
        months[rows] = rng.uniform(lo, hi, size=count)
        pos += count

    u = rng.uniform(size=len(other_rows))
    status[other_rows] = np.where(u < 0.12, 1, np.where(u < 0.62, 0, 2))
    for st, lo, hi in ((0, 1, 65), (1, 1, 90), (2, 38, 111)):
        rows = other_rows[status[other_rows] == st]
        months[rows] = rng.uniform(lo, hi, size=len(rows))
    months = np.round(months, 1)
    dead = status == 0

    # protein expression on varied scales, with a latent shift for deaths
    prot = rng.normal(5.0, 1.0, size=(n, n_prot)) * rng.uniform(0.5, 20.0, size=n_prot)
    sd = prot.std(axis=0)
    for j in PLANTED_PROTEIN_INDICES:
        prot[dead, j] += effect * sd[j]
    clin = rng.normal(size=(n, n_clin)) * 10 + 50
    sparse = rng.normal(size=(n, n_sparse))

    values = np.hstack([prot, clin, sparse])
    missing = np.zeros_like(values, dtype=bool)
    dense = n_prot + n_clin
    for i in other_rows:
        k = rng.integers(1, 6)
        missing[i, rng.choice(dense, size=k, replace=False)] = True
    sparse_frac = rng.uniform(0.75, 0.95, size=n_sparse)
    missing[:, dense:] = rng.uniform(size=(n, n_sparse)) < sparse_frac
    values[missing] = np.nan

    names = protein_names(n_prot) + [f"clin_{i:02d}" for i in range(n_clin)] + \
        [f"sparse_{i:02d}" for i in range(n_sparse)]
    status_enum = [Status.DEAD_OF_DISEASE, Status.DEAD_OTHER_CAUSE, Status.ALIVE]
    return SampleTable(names, values, missing, months, [status_enum[s] for s in status],
                       [f"P{i:04d}" for i in range(n)])


# ---------------------------------------------------------------------------
# informative mid-range censoring


@dataclass
class CensoringScenario:
    """A cohort where censored subjects between ``mid_window`` come mostly from the
    high-marker group, i.e. patients likely to die after follow-up ends."""

    data: SurvivalData
    marker: np.ndarray  # 1 = low, 2 = high
    censored_late: np.ndarray
    censored_mid: np.ndarray


def gen_censoring_scenario(seed: int, n_dead: int = 100, n_late: int = 47, n_mid: int = 43,
                           hazard_ratio: float = 2.0, late_high: float = 0.25,
                           mid_high: float = 0.85, mid_window=(40.0, 70.0),
                           late_window=(70.0, 116.0)) -> CensoringScenario:
    rng = _rng(seed)
    dead_high = rng.uniform(size=n_dead) < 0.5
    base = 1.0 / 25.0
    rate = np.where(dead_high, base * hazard_ratio, base)
    t_dead = np.minimum(rng.exponential(1.0 / rate), 65.0)
    late_is_high = rng.uniform(size=n_late) < late_high
    t_late = rng.uniform(*late_window, size=n_late)
    mid_is_high = rng.uniform(size=n_mid) < mid_high
    t_mid = rng.uniform(*mid_window, size=n_mid)

    time = np.concatenate([t_dead, t_late, t_mid])
    event = np.concatenate([np.ones(n_dead, bool), np.zeros(n_late + n_mid, bool)])
    marker = np.concatenate([dead_high, late_is_high, mid_is_high]).astype(int) + 1
    late = np.concatenate([np.zeros(n_dead, bool), np.ones(n_late, bool), np.zeros(n_mid, bool)])
    mid = np.concatenate([np.zeros(n_dead + n_late, bool), np.ones(n_mid, bool)])
    data = SurvivalData(time, event, marker[:, None].astype(float), covariate_names=["marker"])
    return CensoringScenario(data, marker, late, mid)


def censoring_demo(seed: int, **kwargs) -> tuple[float, float]:
    """Log-rank p for the marker with late censoring only, then with mid-range censoring added."""
    from .survival import dichotomize, log_rank

    sc = gen_censoring_scenario(seed, **kwargs)
    keep = ~sc.censored_mid
    a, b = dichotomize(sc.data.subset(keep), sc.marker[keep], {1})
    p_low = log_rank(a, b).p_value
    a, b = dichotomize(sc.data, sc.marker, {1})
    p_high = log_rank(a, b).p_value
    return p_low, p_high
