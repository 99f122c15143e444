"""Config-driven pipeline: cohort table -> wavelet features -> ranking -> GA
selection -> cross-validation -> Kaplan-Meier / log-rank / Cox on the chosen markers.

Every stage raises :class:`StageError` carrying the stage name, which the CLI
maps to a fixed exit code.  Artifacts are written with fixed float formatting
and sorted JSON keys so reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence
from xml.sax.saxutils import escape

import numpy as np
import scipy

from . import __version__
from .cv import cross_validate, ttest_selector
from .data import (CsvSchema, DataError, GROUP_NAMES, GroupedData, SampleTable, Status,
                   load_csv, normalize, prune_missing, select_markers, split_groups)
from .ga import GaConfig, run_restarts, unique_marker_sets
from .ranking import RankedFeatures, rank_features
from .survival import (CoxFit, KMCurve, SurvivalData, SurvivalError, cox_fit,
                       dichotomize, km_estimate, log_rank, restricted_mean)
from .synth import gen_paper_shape_cohort
from .wavelet import Transform, extract_features

EXIT_CODES = {
    "config": 2,
    "ingest": 10,
    "groups": 11,
    "features": 12,
    "rank": 13,
    "ga": 14,
    "cv": 15,
    "km": 16,
    "logrank": 17,
    "cox": 18,
    "bias": 19,
    "synth": 20,
    "output": 21,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.stage]


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (ValueError, OSError, KeyError, IndexError, np.linalg.LinAlgError) as exc:
        msg = str(exc) or type(exc).__name__
        raise StageError(name, msg) from exc


# ---------------------------------------------------------------------------
# configuration


def _opt(default, section: str, kind: str = "str"):
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata={"section": section, "kind": kind})
    return field(default=default, metadata={"section": section, "kind": kind})


@dataclass
class PipelineConfig:
    """All pipeline settings.  INI sections group the keys; see ``to_ini``."""

    input: str = _opt("", "input")  # empty -> synthetic cohort drawn from ``seed``
    time_column: str = _opt("survival_months", "input")
    status_column: str = _opt("status", "input")
    id_column: str = _opt("patient_id", "input")
    markers: list = _opt(["*"], "input", "list")
    exclude: list = _opt([], "input", "list")
    token_dead: str = _opt("dead", "input")
    token_dead_other: str = _opt("dead_other", "input")
    token_alive: str = _opt("alive", "input")

    prune_threshold: float = _opt(0.5, "groups", "float")
    dead_max: float = _opt(30.0, "groups", "float")
    alive_min: float = _opt(70.0, "groups", "float")

    transform: str = _opt("cwt:3", "features")
    cv_transforms: list = _opt(["raw", "cwt:3"], "features", "list")
    ranking: str = _opt("ttest", "features")

    l_min: int = _opt(5, "ga", "int")
    l_max: int = _opt(7, "ga", "int")
    restarts: int = _opt(10, "ga", "int")
    generations: int = _opt(100, "ga", "int")
    population: int = _opt(0, "ga", "int")  # 0 -> derived from d_max / l
    elite_count: int = _opt(2, "ga", "int")
    crossover_fraction: float = _opt(0.8, "ga", "float")

    k: int = _opt(10, "cv", "int")
    repeats: int = _opt(10, "cv", "int")
    cv_l_min: int = _opt(1, "cv", "int")
    cv_l_max: int = _opt(20, "cv", "int")
    selection_scope: str = _opt("fold", "cv")
    classifier: str = _opt("svm", "cv")

    survival_markers: list = _opt([], "survival", "list")  # empty -> markers chosen by the GA
    max_survival_markers: int = _opt(10, "survival", "int")
    censored_min: float = _opt(0.0, "survival", "float")
    horizon: float = _opt(0.0, "survival", "float")  # 0 -> each arm's last observed time
    cox_encoding: str = _opt("median", "survival")

    seed: int = _opt(0, "run", "int")
    out: str = _opt("wavemark_out", "run")
    threads: int = _opt(1, "run", "int")

    # keys that do not change results and are left out of the config hash
    RUNTIME_KEYS = ("out", "threads")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ValueError(msg)

        need(0.0 <= self.prune_threshold <= 1.0, "prune_threshold must lie in [0, 1]")
        need(0 <= self.dead_max <= self.alive_min, "need 0 <= dead_max <= alive_min")
        Transform.parse(self.transform)
        for t in self.cv_transforms:
            if t != "raw":
                Transform.parse(t)
        need(self.ranking in ("ttest", "wilcoxon"), "ranking must be 'ttest' or 'wilcoxon'")
        need(1 <= self.l_min <= self.l_max, "need 1 <= l_min <= l_max")
        need(self.restarts >= 1 and self.generations >= 1, "restarts and generations must be >= 1")
        need(self.population == 0 or self.population >= self.elite_count + 2,
             "population must be 0 (derived) or at least elite_count + 2")
        need(self.elite_count >= 0, "elite_count must be >= 0")
        need(0.0 <= self.crossover_fraction <= 1.0, "crossover_fraction must lie in [0, 1]")
        need(self.k >= 2 and self.repeats >= 1, "need k >= 2 and repeats >= 1")
        need(1 <= self.cv_l_min <= self.cv_l_max, "need 1 <= cv_l_min <= cv_l_max")
        need(self.selection_scope in ("fold", "global"), "selection_scope must be 'fold' or 'global'")
        need(self.classifier in ("svm", "bayes"), "classifier must be 'svm' or 'bayes'")
        need(self.max_survival_markers >= 1, "max_survival_markers must be >= 1")
        need(self.censored_min >= 0 and self.horizon >= 0, "censored_min and horizon must be >= 0")
        need(self.cox_encoding in ("median", "continuous"), "cox_encoding must be 'median' or 'continuous'")
        need(self.threads >= 1, "threads must be >= 1")
        need(len({self.token_dead, self.token_dead_other, self.token_alive}) == 3,
             "status tokens must be distinct")

    def schema(self) -> CsvSchema:
        return CsvSchema(
            time=self.time_column, status=self.status_column, id=self.id_column or None,
            status_tokens={self.token_dead: Status.DEAD_OF_DISEASE,
                           self.token_dead_other: Status.DEAD_OTHER_CAUSE,
                           self.token_alive: Status.ALIVE},
        )

    def to_dict(self, runtime: bool = True) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if not runtime:
            for key in self.RUNTIME_KEYS:
                d.pop(key)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(runtime=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_ini(self, runtime: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            if not runtime and f.name in self.RUNTIME_KEYS:
                continue
            sec = f.metadata["section"]
            if not cp.has_section(sec):
                cp.add_section(sec)
            v = getattr(self, f.name)
            cp.set(sec, f.name, ", ".join(v) if isinstance(v, list) else str(v))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp.items(sec))
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str, overrides: dict | None = None) -> "PipelineConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        spec = {f.name: f for f in fields(cls)}
        values = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                if key not in spec or spec[key].metadata["section"] != sec:
                    raise ValueError(f"unknown config key [{sec}] {key}")
                values[key] = _convert(raw, spec[key].metadata["kind"], f"[{sec}] {key}")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "PipelineConfig":
        text = "" if path is None else Path(path).read_text()
        return cls.from_ini(text, overrides)


def _convert(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ValueError(f"{where}: expected {kind}, got {raw!r}") from None
    if kind == "list":
        return [p.strip() for p in raw.split(",") if p.strip()]
    return raw


# ---------------------------------------------------------------------------
# artifact writing


def _plain(obj):
    """Numpy scalars/arrays to builtins; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(_cell(x) for x in v)
    return str(v)


def write_csv_records(path: Path, records: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    columns = list(columns or (records[0].keys() if records else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def write_records(out: Path, stem: str, records: Sequence[dict], fmt: str = "csv") -> Path:
    if fmt == "json":
        return write_json(out / f"{stem}.json", list(records))
    return write_csv_records(out / f"{stem}.csv", records)


def format_table(records: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """Fixed-width text rendering for terminals."""
    if not records:
        return "(no rows)"
    columns = list(columns or records[0].keys())

    def show(v):
        v = _plain(v)
        if isinstance(v, float):
            return f"{v:.4g}"
        if isinstance(v, list):
            return ",".join(map(str, v))
        return "" if v is None else str(v)

    body = [[show(r.get(c)) for c in columns] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in body]
    return "\n".join(lines)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def km_svg(curves: Sequence[tuple[str, KMCurve]], title: str, width: int = 480, height: int = 320) -> str:
    """Step plot of survival curves as a standalone SVG document."""
    left, right, top, bottom = 50, 110, 30, 40
    pw, ph = width - left - right, height - top - bottom
    t_max = max(c.last_time for _, c in curves) or 1.0
    step = next(s for s in (1, 2, 5, 10, 20, 25, 50, 100, 200, 500, 1000) if t_max / s <= 8)

    def xy(t, s):
        return f"{left + pw * t / t_max:.2f},{top + ph * (1 - s):.2f}"

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
             f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    t = 0
    while t <= t_max + 1e-9:
        x = left + pw * t / t_max
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
        t += step
    for s in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + ph * (1 - s)
        parts.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{s:g}</text>')
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 6}" text-anchor="middle">months</text>')
    for k, (label, c) in enumerate(curves):
        pts = [xy(0, 1.0)]
        prev = 1.0
        for ti, si in zip(c.times, c.survival):
            pts += [xy(ti, prev), xy(ti, si)]
            prev = si
        pts.append(xy(c.last_time, prev))
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = top + 14 + 16 * k
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(label)} (n={c.n})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def slug(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def _pmap(fn: Callable, jobs: Sequence, threads: int) -> list:
    """Ordered map, in worker processes when ``threads > 1``; results do not depend on it."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# stages


def load_table(cfg: PipelineConfig) -> SampleTable:
    with stage("ingest"):
        if not cfg.input:
            return gen_paper_shape_cohort(cfg.seed)
        return load_csv(cfg.input, cfg.schema())


def build_groups(cfg: PipelineConfig, table: SampleTable) -> tuple[SampleTable, GroupedData]:
    with stage("groups"):
        pruned = prune_missing(table, cfg.prune_threshold)
        names = select_markers(pruned.marker_names, cfg.markers, cfg.exclude)
        if not names:
            raise DataError(f"no retained marker matches {cfg.markers} (exclude {cfg.exclude})")
        grouped = split_groups(pruned, cfg.dead_max, cfg.alive_min, names)
        return pruned, normalize(grouped)


def group_records(g: GroupedData, table: SampleTable) -> list[dict]:
    pos = {sid: i for i, sid in enumerate(table.sample_ids)}
    out = []
    for sid, lab in zip(g.sample_ids, g.y):
        i = pos[sid]
        out.append({"sample_id": sid, "group": GROUP_NAMES[int(lab)],
                    "survival_months": float(table.survival_months[i]), "status": table.status[i].value})
    return out


def feature_names(transform: Transform | None, marker_names: Sequence[str], n_features: int) -> list[str]:
    if transform is None or transform.kind == "cwt":
        return list(marker_names)
    return [f"d{transform.param}_{i:03d}" for i in range(n_features)]


def compute_features(g: GroupedData, spec: str) -> tuple[np.ndarray, np.ndarray | None, list[str]]:
    with stage("features"):
        if spec == "raw":
            return g.X, np.arange(g.X.shape[1]), list(g.marker_names)
        tr = Transform.parse(spec)
        F, index_map = extract_features(g.X, tr)
        return F, index_map, feature_names(tr, g.marker_names, F.shape[1])


def feature_records(g: GroupedData, F: np.ndarray, names: Sequence[str]) -> list[dict]:
    return [{"sample_id": sid, "group": GROUP_NAMES[int(lab)], **dict(zip(names, row))}
            for sid, lab, row in zip(g.sample_ids, g.y, F)]


def rank_stage(cfg: PipelineConfig, F: np.ndarray, y: np.ndarray) -> RankedFeatures:
    with stage("rank"):
        return rank_features(F, y, cfg.ranking)


def ranked_records(r: RankedFeatures, names: Sequence[str], index_map) -> list[dict]:
    rows = []
    for rank, j in enumerate(r.order, start=1):
        rows.append({"rank": rank, "feature": names[j], "index": int(j),
                     "marker": None if index_map is None else names[int(index_map[j])],
                     "statistic": float(r.statistic[j]), "p_value": float(r.p_value[j]),
                     "degenerate": bool(r.degenerate[j])})
    return rows


def _ga_job(job):
    cfg, l, F, y, ranked, names, index_map = job
    gc = GaConfig(l=l, d_max=F.shape[1], N=cfg.population or None, N_G=cfg.generations,
                  elite_count=cfg.elite_count, crossover_fraction=cfg.crossover_fraction,
                  seed=int(np.random.SeedSequence([cfg.seed, l]).generate_state(1)[0]))
    results = run_restarts(gc, cfg.restarts, F, y, ranked, names if index_map is not None else None, index_map)
    sets = []
    for res in unique_marker_sets(results):
        rep = cross_validate(F[:, res.best_indices], y, cfg.classifier, cfg.k, cfg.repeats, cfg.seed)
        sets.append({"indices": res.best_indices, "features": [names[i] for i in res.best_indices],
                     "markers": res.selected_markers, "fitness": res.best_fitness,
                     "generations": res.generations, "cv_accuracy": rep.mean_accuracy,
                     "cv_std": rep.std_accuracy})
    sets.sort(key=lambda s: (s["fitness"], sorted(s["indices"])))
    return {"l": l, "population": gc.N, "n_crossover": gc.n_crossover, "n_mutation": gc.n_mutation,
            "restarts": cfg.restarts, "sets": sets}


def ga_stage(cfg: PipelineConfig, F: np.ndarray, y: np.ndarray, ranked: RankedFeatures,
             names: Sequence[str], index_map) -> dict:
    """GA restarts for every l in the sweep; duplicate subsets collapse.

    The CV accuracy attached to each subset evaluates a set that was itself
    chosen on all samples, so it is optimistic by construction.
    """
    with stage("ga"):
        if cfg.l_max > F.shape[1]:
            raise ValueError(f"l_max={cfg.l_max} exceeds the {F.shape[1]} available features")
        jobs = [(cfg, l, F, y, ranked, list(names), index_map) for l in range(cfg.l_min, cfg.l_max + 1)]
        runs = _pmap(_ga_job, jobs, cfg.threads)
        freq: dict[str, int] = {}
        for run in runs:
            for s in run["sets"]:
                for m in (s["markers"] or []):
                    freq[m] = freq.get(m, 0) + 1
        return {"transform": cfg.transform, "d_max": int(F.shape[1]), "classifier": cfg.classifier,
                "cv_k": cfg.k, "cv_repeats": cfg.repeats, "cv_selection": "none (sets chosen on all samples)",
                "runs": runs, "marker_frequency": dict(sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])))}


def _cv_job(job):
    cfg, spec, l, F, y = job
    rep = cross_validate(F, y, cfg.classifier, cfg.k, cfg.repeats, cfg.seed,
                         ttest_selector(l, cfg.ranking), cfg.selection_scope, feature_spec=spec)
    return rep.to_row(transform=spec, n_features=l)


def cv_stage(cfg: PipelineConfig, g: GroupedData, transforms: Sequence[str] | None = None) -> list[dict]:
    """One row per (transform, l) with l in the CV sweep, clipped to the available features."""
    jobs = []
    for spec in transforms or cfg.cv_transforms:
        F, _, _ = compute_features(g, spec)
        for l in range(cfg.cv_l_min, min(cfg.cv_l_max, F.shape[1]) + 1):
            jobs.append((cfg, spec, l, F, g.y))
    with stage("cv"):
        return _pmap(_cv_job, jobs, cfg.threads)


def survival_data(cfg: PipelineConfig, table: SampleTable, markers: Sequence[str]) -> tuple[SurvivalData, np.ndarray]:
    """Disease-specific survival over rows complete for ``markers``.

    Deaths from other causes are dropped; alive patients are censored, and
    with ``censored_min > 0`` only those followed beyond it are kept.
    """
    unknown = [m for m in markers if m not in table.marker_names]
    if unknown:
        raise DataError(f"unknown marker(s): {', '.join(unknown)}")
    cols = [table.marker_names.index(m) for m in markers]
    status = np.array([s.value for s in table.status])
    keep = ~table.missing[:, cols].any(axis=1) & (status != Status.DEAD_OTHER_CAUSE.value)
    if cfg.censored_min > 0:
        keep &= ~((status == Status.ALIVE.value) & (table.survival_months <= cfg.censored_min))
    if not keep.any():
        raise DataError("no subject left for survival analysis")
    vals = table.values[np.ix_(keep, cols)]
    d = SurvivalData(table.survival_months[keep], status[keep] == Status.DEAD_OF_DISEASE.value,
                     vals, covariate_names=list(markers))
    return d, vals


def _median_split(v: np.ndarray, marker: str) -> np.ndarray:
    """1 above the median, else 0; with ties at the median (categorical
    scores) the median itself joins the high arm."""
    med = np.median(v)
    high = v > med
    if not high.any():
        high = v >= med
    if high.all() or not high.any():
        raise SurvivalError(f"median split of {marker} leaves one arm empty")
    return high.astype(int)


def pick_survival_markers(cfg: PipelineConfig, ga: dict | None) -> list[str]:
    if cfg.survival_markers:
        return list(cfg.survival_markers)
    if ga is None or not ga["marker_frequency"]:
        raise StageError("km", "no markers to analyse: set [survival] survival_markers "
                               "(DWT features cannot be traced back to markers)")
    return list(ga["marker_frequency"])[:cfg.max_survival_markers]


def km_stage(cfg: PipelineConfig, table: SampleTable, markers: Sequence[str]):
    """Median-split KM curves per marker, log-rank test and restricted means."""
    curves, km_rows, lr_rows = {}, [], []
    for m in markers:
        with stage("km"):
            d, vals = survival_data(cfg, table, [m])
            high = _median_split(vals[:, 0], m)
            low_d, high_d = dichotomize(d, high, {0})
            arms = (("low", km_estimate(low_d)), ("high", km_estimate(high_d)))
        curves[m] = arms
        for arm, c in arms:
            for t, s, n, dd, v in zip(c.times, c.survival, c.at_risk, c.deaths, c.variance):
                km_rows.append({"marker": m, "arm": arm, "time": float(t), "survival": float(s),
                                "at_risk": int(n), "deaths": int(dd), "variance": float(v)})
        with stage("logrank"):
            lr = log_rank(low_d, high_d)
            # per-arm horizon (each arm's last observed time) unless one is configured
            rm = [restricted_mean(c, cfg.horizon or None) for _, c in arms]
        lr_rows.append({"marker": m, "n_low": len(low_d), "n_high": len(high_d),
                        "events_low": int(low_d.event.sum()), "events_high": int(high_d.event.sum()),
                        "horizon_low": cfg.horizon or arms[0][1].last_time,
                        "horizon_high": cfg.horizon or arms[1][1].last_time,
                        "mean_low": rm[0].mean, "mean_low_lo": rm[0].ci95[0], "mean_low_hi": rm[0].ci95[1],
                        "mean_high": rm[1].mean, "mean_high_lo": rm[1].ci95[0], "mean_high_hi": rm[1].ci95[1],
                        "chi2": lr.chi2, "p_value": lr.p_value})
    return curves, km_rows, lr_rows


def cox_stage(cfg: PipelineConfig, table: SampleTable, markers: Sequence[str]) -> list[dict]:
    """Univariate fit per marker, then one multivariable fit when there are several."""
    def fit(ms: Sequence[str]) -> tuple[CoxFit, int]:
        d, vals = survival_data(cfg, table, ms)
        if cfg.cox_encoding == "median":
            vals = np.column_stack([_median_split(vals[:, i], m) for i, m in enumerate(ms)])
            d = SurvivalData(d.time, d.event, vals.astype(float), covariate_names=list(ms))
        return cox_fit(d), len(d)

    models = [("univariate", [m]) for m in markers]
    if len(markers) > 1:
        models.append(("multivariable", list(markers)))
    rows = []
    with stage("cox"):
        for label, ms in models:
            f, n = fit(ms)
            for rec, se in zip(f.table(), f.se):
                rows.append({"model": label, **rec, "se": float(se), "n": n, "converged": f.converged})
    return rows


# ---------------------------------------------------------------------------
# full run


ARTIFACTS = ("config.ini", "groups.csv", "features.csv", "ranked.csv", "ga.json", "cv_report.csv",
             "km.csv", "logrank.csv", "cox.json", "cox.csv", "manifest.json")


def run_pipeline(cfg: PipelineConfig, log: Callable[[str], None] = lambda s: None) -> dict[str, Path]:
    """Run every stage and write the artifact set into ``cfg.out``.

    On a stage failure a ``FAILED`` file naming the stage is written next to
    whatever artifacts already exist, and the :class:`StageError` propagates.
    """
    out = Path(cfg.out)
    with stage("output"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED").unlink(missing_ok=True)
    written: dict[str, Path] = {}

    def put(name: str, path: Path):
        written[name] = path

    try:
        if cfg.input and not Path(cfg.input).exists():
            raise StageError("config", f"input file {cfg.input} does not exist")
        put("config.ini", out / "config.ini")
        (out / "config.ini").write_text(cfg.to_ini(runtime=False))

        table = load_table(cfg)
        log(f"ingest: {table.n_samples} samples x {table.n_markers} markers")
        pruned, g = build_groups(cfg, table)
        counts = np.bincount(g.y, minlength=2)
        log(f"groups: pruned to {pruned.n_samples} x {pruned.n_markers}; "
            f"{counts[0]} dead < {cfg.dead_max:g} months, {counts[1]} alive > {cfg.alive_min:g} months")
        put("groups.csv", write_csv_records(out / "groups.csv", group_records(g, pruned)))

        F, index_map, names = compute_features(g, cfg.transform)
        put("features.csv", write_csv_records(out / "features.csv", feature_records(g, F, names)))
        ranked = rank_stage(cfg, F, g.y)
        put("ranked.csv", write_csv_records(out / "ranked.csv", ranked_records(ranked, names, index_map)))
        log(f"features: {cfg.transform} -> {F.shape[1]} features; top 5: "
            + ", ".join(names[j] for j in ranked.order[:5]))

        ga = ga_stage(cfg, F, g.y, ranked, names, index_map)
        put("ga.json", write_json(out / "ga.json", ga))
        log(f"ga: {sum(len(r['sets']) for r in ga['runs'])} distinct subsets for l = {cfg.l_min}..{cfg.l_max}")

        cv_rows = cv_stage(cfg, g)
        put("cv_report.csv", write_csv_records(out / "cv_report.csv", cv_rows))
        best = max(cv_rows, key=lambda r: r["mean_accuracy"])
        log(f"cv: {len(cv_rows)} rows; best {best['transform']} l={best['n_features']} "
            f"accuracy {best['mean_accuracy']:.3f}")

        markers = pick_survival_markers(cfg, ga)
        curves, km_rows, lr_rows = km_stage(cfg, table, markers)
        put("km.csv", write_csv_records(out / "km.csv", km_rows))
        with stage("output"):
            for m, arms in curves.items():
                name = f"km_{slug(m)}.svg"
                (out / name).write_text(km_svg([(f"{m} {a}", c) for a, c in arms], f"{m}: median split"))
                put(name, out / name)
        put("logrank.csv", write_csv_records(out / "logrank.csv", lr_rows))
        log("survival:\n" + format_table(lr_rows, ["marker", "n_low", "n_high", "mean_low", "mean_high",
                                                   "chi2", "p_value"]))

        cox_rows = cox_stage(cfg, table, markers)
        put("cox.json", write_json(out / "cox.json", cox_rows))
        put("cox.csv", write_csv_records(out / "cox.csv", cox_rows))

        with stage("output"):
            manifest = {
                "config": cfg.to_dict(runtime=False),
                "config_hash": cfg.digest(),
                "seed": cfg.seed,
                "versions": versions(),
                "exit_codes": EXIT_CODES,
                "artifacts": {k: sha256_file(p) for k, p in sorted(written.items())},
            }
            put("manifest.json", write_json(out / "manifest.json", manifest))
    except StageError as exc:
        (out / "FAILED").write_text(f"stage: {exc.stage}\nexit_code: {exc.exit_code}\nerror: {exc}\n")
        raise
    return written


def versions() -> dict:
    return {"wavemark": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}
