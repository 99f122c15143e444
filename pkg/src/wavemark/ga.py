"""Real-coded genetic algorithm for picking ``l`` distinct feature indices.

Genes are reals in the 1-based index space ``[1, d_max]``; they are rounded
and de-duplicated by :func:`repair` before every evaluation.  Fitness is the
resubstitution error of the pooled-covariance Bayes classifier plus one minus
the mean maximum posterior, so lower is better.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifiers import bayes_classify, bayes_fit, bayes_posterior
from .ranking import RankedFeatures, top_k

FitnessFn = Callable[[np.ndarray], float]


@dataclass
class GaConfig:
    l: int
    d_max: int
    N: int | None = None  # None -> derived from d_max / l
    N_G: int = 100
    elite_count: int = 2
    crossover_fraction: float = 0.8
    mutation_scale: float = 1.0
    mutation_shrink: float = 1.0
    seed: int = 0
    stall_generations: int = 50
    stall_tol: float = 1e-6

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("chromosome length l must be >= 1")
        if self.l > self.d_max:
            raise ValueError(f"chromosome length {self.l} exceeds feature count {self.d_max}")
        if not 0.0 <= self.crossover_fraction <= 1.0:
            raise ValueError("crossover_fraction must lie in [0, 1]")
        if self.elite_count < 0:
            raise ValueError("elite_count must be >= 0")
        if self.N_G < 1:
            raise ValueError("N_G must be >= 1")
        if self.N is None:
            self.N = population_size(self.d_max, self.l, self.elite_count)
        if self.N < self.elite_count + 2:
            raise ValueError(f"population size {self.N} must be at least elite_count + 2")

    @property
    def n_crossover(self) -> int:
        return _round_half_up(self.crossover_fraction * (self.N - self.elite_count))

    @property
    def n_mutation(self) -> int:
        return self.N - self.elite_count - self.n_crossover

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GaResult:
    best_indices: list[int]  # 0-based feature indices, in gene order
    best_fitness: float
    history: list[tuple[float, float]]  # per generation (best, mean)
    selected_markers: list[str] | None
    generations: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "indices": self.best_indices,
            "markers": self.selected_markers,
            "fitness": self.best_fitness,
            "generations": self.generations,
            "history": [{"best": b, "mean": m} for b, m in self.history],
            "config": self.config,
        }


def _round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(int) if np.ndim(x) else int(np.floor(x + 0.5))


def population_size(d_max: int, l: int, elite_count: int = 2) -> int:
    return max(_round_half_up(d_max / l), elite_count + 2)


def mutation_sigmas(cfg: GaConfig) -> np.ndarray:
    """Gaussian mutation widths for generations ``1..N_G`` (index ``k - 1``).

    ``sigma_1 = scale * (d_max - 1)``; ``sigma_k = sigma_{k-1} * (1 - shrink * k / N_G)``,
    floored at zero.
    """
    sig = np.empty(cfg.N_G)
    sig[0] = cfg.mutation_scale * (cfg.d_max - 1)
    for k in range(2, cfg.N_G + 1):
        sig[k - 1] = max(sig[k - 2] * (1.0 - cfg.mutation_shrink * k / cfg.N_G), 0.0)
    return sig


def repair(genes, d_max: int, rng: np.random.Generator) -> np.ndarray:
    """Round, clip to ``[1, d_max]`` and replace repeated genes with unused indices."""
    g = np.clip(_round_half_up(np.asarray(genes, dtype=float)), 1, d_max)
    g = np.atleast_1d(g)
    if len(g) > d_max:
        raise ValueError(f"cannot place {len(g)} distinct genes in 1..{d_max}")
    seen = set()
    dup = []
    for i, v in enumerate(g.tolist()):
        if v in seen:
            dup.append(i)
        else:
            seen.add(v)
    if dup:
        unused = np.setdiff1d(np.arange(1, d_max + 1), g)
        g[dup] = rng.choice(unused, size=len(dup), replace=False)
    return g.astype(float)


def genes_to_indices(genes) -> np.ndarray:
    return np.asarray(genes, dtype=int) - 1


def init_population(cfg: GaConfig, ranked: RankedFeatures | None, rng: np.random.Generator) -> np.ndarray:
    """``N x l`` gene matrix: row 0 holds the top-``l`` ranked features, the rest are random."""
    if cfg.l > cfg.d_max:
        raise ValueError("l exceeds d_max")
    pop = np.empty((cfg.N, cfg.l))
    start = 0
    if ranked is not None:
        if len(ranked) != cfg.d_max:
            raise ValueError("ranking covers a different number of features than d_max")
        pop[0] = np.asarray(top_k(ranked, cfg.l)) + 1
        start = 1
    for i in range(start, cfg.N):
        pop[i] = rng.choice(cfg.d_max, size=cfg.l, replace=False) + 1
    return pop


def fitness(genes, X: np.ndarray, y: np.ndarray) -> float:
    """Resubstitution error plus ``1 - mean max posterior`` on the chosen columns."""
    cols = genes_to_indices(genes)
    Xs = X[:, cols]
    model = bayes_fit(Xs, y)
    post = bayes_posterior(model, Xs)
    if post.ndim == 1:
        post = post[None, :]
    pred = model.class_labels[np.argmax(post, axis=1)]
    e_c = float(np.mean(pred != y))
    e_p = float(1.0 - np.mean(post.max(axis=1)))
    return e_c + e_p


def rank_expectation(scores: np.ndarray, count: int) -> np.ndarray:
    """Expected parent counts, proportional to ``1/sqrt(rank)`` (rank 1 = lowest score).

    Tied scores share the mean weight of the ranks they span.
    """
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(scores, kind="stable")
    weight = 1.0 / np.sqrt(np.arange(1, len(scores) + 1))
    _, group = np.unique(scores[order], return_inverse=True)
    weight = (np.bincount(group, weight) / np.bincount(group))[group]
    raw = np.empty(len(scores))
    raw[order] = weight
    return raw * (count / raw.sum())


def select_parents(scores: np.ndarray, count: int, rng: np.random.Generator,
                   shuffle: bool = True) -> np.ndarray:
    """Stochastic universal sampling over rank-scaled expectations.

    Returns ``count`` population indices.  With ``shuffle`` the picks are
    permuted so consecutive parents are not systematically the same individual.
    """
    if count <= 0:
        return np.empty(0, dtype=int)
    expect = rank_expectation(np.asarray(scores, dtype=float), count)
    edges = np.cumsum(expect)
    pointers = rng.uniform() + np.arange(count)  # step = sum(expect) / count = 1
    picks = np.searchsorted(edges, pointers, side="right")
    picks = np.minimum(picks, len(scores) - 1)
    return rng.permutation(picks) if shuffle else picks


def uniform_crossover(p1, p2, rng: np.random.Generator, d_max: int, mask=None) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("parents must have equal length")
    if mask is None:
        mask = rng.integers(0, 2, size=p1.shape).astype(bool)
    child = np.where(mask, p1, p2)
    return repair(child, d_max, rng)


def gaussian_mutation(parent, sigma: float, rng: np.random.Generator, d_max: int) -> np.ndarray:
    parent = np.asarray(parent, dtype=float)
    child = parent + rng.normal(0.0, 1.0, size=parent.shape) * sigma
    return repair(child, d_max, rng)


class _Evaluator:
    """Fitness with a per-run cache keyed on the sorted index set."""

    def __init__(self, fn: FitnessFn):
        self.fn = fn
        self.cache: dict[tuple, float] = {}

    def __call__(self, genes: np.ndarray) -> float:
        key = tuple(sorted(int(g) for g in genes))
        val = self.cache.get(key)
        if val is None:
            val = float(self.fn(np.asarray(genes)))
            self.cache[key] = val
        return val


def run_ga(cfg: GaConfig, X: np.ndarray | None = None, y: np.ndarray | None = None,
           ranked: RankedFeatures | None = None, marker_names: Sequence[str] | None = None,
           fitness_fn: FitnessFn | None = None, index_map: np.ndarray | None = None) -> GaResult:
    """Generational loop: N_e elites, N_c crossover children, N_m mutation children.

    ``fitness_fn`` (genes -> float, genes 1-based) overrides the Bayes fitness,
    which otherwise needs ``X`` and ``y``.  ``selected_markers`` is filled only
    when ``marker_names`` and a positional ``index_map`` are both available.
    """
    if fitness_fn is None:
        if X is None or y is None:
            raise ValueError("X and y are required when no fitness_fn is given")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.shape[1] != cfg.d_max:
            raise ValueError(f"X has {X.shape[1]} columns but d_max is {cfg.d_max}")
        fitness_fn = lambda g: fitness(g, X, y)  # noqa: E731
    evaluate = _Evaluator(fitness_fn)
    rng = np.random.default_rng(cfg.seed)

    def finish(best_genes, best_f, history, gens):
        idx = [int(i) for i in genes_to_indices(best_genes)]
        markers = None
        if marker_names is not None and index_map is not None:
            markers = locate_markers(idx, marker_names, index_map)
        return GaResult(idx, float(best_f), history, markers, gens, cfg.to_dict())

    if cfg.l == cfg.d_max:
        genes = np.arange(1, cfg.d_max + 1, dtype=float)
        f = evaluate(genes)
        return finish(genes, f, [(f, f)], 1)

    sigmas = mutation_sigmas(cfg)
    pop = init_population(cfg, ranked, rng)
    history: list[tuple[float, float]] = []
    best_so_far = np.inf
    last_improve = 0
    gen = 0
    for gen in range(1, cfg.N_G + 1):
        scores = np.array([evaluate(ind) for ind in pop])
        order = np.argsort(scores, kind="stable")
        history.append((float(scores[order[0]]), float(scores.mean())))
        if scores[order[0]] < best_so_far - cfg.stall_tol:
            last_improve = gen
        best_so_far = min(best_so_far, scores[order[0]])
        if gen == cfg.N_G or gen - last_improve >= cfg.stall_generations:
            break
        pop = _next_generation(pop, scores, order, cfg, sigmas[gen - 1], rng)

    best = pop[order[0]]
    return finish(best, scores[order[0]], history, gen)


def _next_generation(pop, scores, order, cfg: GaConfig, sigma: float, rng) -> np.ndarray:
    n_e, n_c, n_m = cfg.elite_count, cfg.n_crossover, cfg.n_mutation
    parents = select_parents(scores, 2 * n_c + n_m, rng)
    children = [pop[i].copy() for i in order[:n_e]]
    for k in range(n_c):
        children.append(uniform_crossover(pop[parents[2 * k]], pop[parents[2 * k + 1]], rng, cfg.d_max))
    for k in range(n_m):
        children.append(gaussian_mutation(pop[parents[2 * n_c + k]], sigma, rng, cfg.d_max))
    return np.vstack(children)


def locate_markers(indices: Sequence[int], names: Sequence[str], index_map: np.ndarray | None) -> list[str]:
    """Marker names behind wavelet feature indices (CWT only)."""
    if index_map is None:
        raise ValueError("marker localisation is undefined for DWT features: "
                         "detail coefficients have no positional link to individual markers")
    return [names[int(index_map[i])] for i in indices]


def run_restarts(cfg: GaConfig, restarts: int, X, y, ranked=None, marker_names=None,
                 index_map=None, fitness_fn: FitnessFn | None = None) -> list[GaResult]:
    """Independent runs with seeds derived from ``cfg.seed``."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(restarts)
    out = []
    for s in seeds:
        c = GaConfig(**{**cfg.to_dict(), "seed": int(s)})
        out.append(run_ga(c, X, y, ranked, marker_names, fitness_fn, index_map))
    return out


def unique_marker_sets(results: Sequence[GaResult]) -> list[GaResult]:
    """Drop results whose selected index set repeats an earlier one."""
    seen = set()
    out = []
    for r in results:
        key = frozenset(r.best_indices)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out
