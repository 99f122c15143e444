"""Clinical sample tables: CSV loading, missing-value pruning, grouping and scaling."""

from __future__ import annotations

import csv
import enum
import fnmatch
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class Status(enum.Enum):
    DEAD_OF_DISEASE = "dead_of_disease"
    DEAD_OTHER_CAUSE = "dead_other_cause"
    ALIVE = "alive"


DEFAULT_STATUS_TOKENS = {
    "dead": Status.DEAD_OF_DISEASE,
    "dead_other": Status.DEAD_OTHER_CAUSE,
    "alive": Status.ALIVE,
}

GROUP_DEAD = 0
GROUP_ALIVE = 1
GROUP_NAMES = {GROUP_DEAD: "group_dead", GROUP_ALIVE: "group_alive"}


class DataError(ValueError):
    pass


@dataclass
class SampleTable:
    """Patients x markers.

    ``missing`` is the authoritative missing-cell flag; the matching entries of
    ``values`` hold NaN so that any accidental arithmetic on them is loud.
    """

    marker_names: list[str]
    values: np.ndarray
    missing: np.ndarray
    survival_months: np.ndarray
    status: list[Status]
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing = np.asarray(self.missing, dtype=bool)
        self.survival_months = np.asarray(self.survival_months, dtype=float)
        n = self.values.shape[0]
        if self.values.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        if self.missing.shape != self.values.shape:
            raise DataError("missing mask must match values shape")
        if len(self.survival_months) != n or len(self.status) != n:
            raise DataError("survival_months and status must have one entry per row")
        if len(self.marker_names) != self.values.shape[1]:
            raise DataError("marker_names length must equal the column count")
        if np.any(self.survival_months < 0) or not np.all(np.isfinite(self.survival_months)):
            raise DataError("survival_months must be finite and non-negative")
        if not self.sample_ids:
            self.sample_ids = [str(i) for i in range(n)]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_markers(self) -> int:
        return self.values.shape[1]

    def take(self, rows=None, cols=None) -> "SampleTable":
        rows = np.arange(self.n_samples) if rows is None else np.asarray(rows)
        cols = np.arange(self.n_markers) if cols is None else np.asarray(cols)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        if cols.dtype == bool:
            cols = np.flatnonzero(cols)
        return SampleTable(
            marker_names=[self.marker_names[c] for c in cols],
            values=self.values[np.ix_(rows, cols)],
            missing=self.missing[np.ix_(rows, cols)],
            survival_months=self.survival_months[rows],
            status=[self.status[r] for r in rows],
            sample_ids=[self.sample_ids[r] for r in rows],
        )

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.marker_names.index(name)]


@dataclass
class GroupedData:
    X: np.ndarray
    y: np.ndarray
    marker_names: list[str]
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y):
            raise DataError("X must be 2-D with one row per label")
        if self.X.shape[1] != len(self.marker_names):
            raise DataError("marker_names length must equal the column count")
        if not np.all(np.isfinite(self.X)):
            raise DataError("grouped data may not contain missing or non-finite values")
        if len(np.unique(self.y)) < 2:
            raise DataError("both groups must be present")


@dataclass
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``markers=None`` means every column not claimed by another role.
    """

    time: str = "survival_months"
    status: str = "status"
    id: str | None = None
    markers: list[str] | None = None
    ignore: list[str] = field(default_factory=list)
    status_tokens: Mapping[str, Status] = field(default_factory=lambda: dict(DEFAULT_STATUS_TOKENS))


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> SampleTable:
    """Read a one-row-per-patient CSV. Empty cells are flagged missing, not imputed."""
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for role in (schema.time, schema.status, schema.id):
            if role and role not in header:
                raise DataError(f"{path}: required column {role!r} not in header")
        claimed = {schema.time, schema.status, *schema.ignore}
        if schema.id:
            claimed.add(schema.id)
        if schema.markers is None:
            markers = [h for h in header if h not in claimed]
        else:
            unknown = [m for m in schema.markers if m not in header]
            if unknown:
                raise DataError(f"{path}: marker columns not in header: {unknown}")
            markers = list(schema.markers)
        col = {h: i for i, h in enumerate(header)}
        marker_cols = [col[m] for m in markers]

        rows, miss, times, status, ids = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            token = row[col[schema.status]].strip()
            if token not in schema.status_tokens:
                raise DataError(f"{path}:{lineno}: unknown status token {token!r}")
            try:
                t = float(row[col[schema.time]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: survival time {row[col[schema.time]]!r} is not a number") from None
            if not np.isfinite(t) or t < 0:
                raise DataError(f"{path}:{lineno}: survival time must be non-negative, got {t}")
            vals, flags = [], []
            for c in marker_cols:
                cell = row[c].strip()
                if cell == "":
                    vals.append(np.nan)
                    flags.append(True)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {header[c]!r} value {cell!r} is not a number") from None
                flags.append(False)
            rows.append(vals)
            miss.append(flags)
            times.append(t)
            status.append(schema.status_tokens[token])
            ids.append(row[col[schema.id]].strip() if schema.id else str(len(ids)))

    values = np.array(rows, dtype=float).reshape(len(rows), len(markers))
    return SampleTable(markers, values, np.array(miss, dtype=bool).reshape(values.shape),
                       np.array(times), status, ids)


def write_csv(table: SampleTable, path: str | Path, schema: CsvSchema | None = None) -> None:
    """Inverse of :func:`load_csv` (missing cells written empty)."""
    schema = schema or CsvSchema()
    reverse = {v: k for k, v in schema.status_tokens.items()}
    id_col = schema.id or "patient_id"
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_col, schema.time, schema.status, *table.marker_names])
        for i in range(table.n_samples):
            cells = ["" if table.missing[i, j] else repr(float(table.values[i, j]))
                     for j in range(table.n_markers)]
            w.writerow([table.sample_ids[i], repr(float(table.survival_months[i])),
                        reverse[table.status[i]], *cells])


def prune_missing(t: SampleTable, feature_threshold: float = 0.5) -> SampleTable:
    """Drop markers missing in more than ``feature_threshold`` of rows, then incomplete rows."""
    if not 0.0 <= feature_threshold <= 1.0:
        raise ValueError("feature_threshold must lie in [0, 1]")
    if t.n_samples == 0:
        raise DataError("table has no rows")
    frac = t.missing.mean(axis=0)
    keep_cols = frac <= feature_threshold
    if not keep_cols.any():
        raise DataError("every marker exceeds the missing-value threshold")
    keep_rows = ~t.missing[:, keep_cols].any(axis=1)
    if not keep_rows.any():
        raise DataError("no sample is complete over the retained markers")
    return t.take(keep_rows, keep_cols)


def select_markers(names: Sequence[str], include: Sequence[str] | None = None,
                   exclude: Sequence[str] = ()) -> list[str]:
    """Filter marker names by shell-style glob patterns."""
    out = []
    for name in names:
        if include and not any(fnmatch.fnmatchcase(name, p) for p in include):
            continue
        if any(fnmatch.fnmatchcase(name, p) for p in exclude):
            continue
        out.append(name)
    return out


def split_groups(t: SampleTable, dead_max: float = 30.0, alive_min: float = 70.0,
                 markers: Sequence[str] | None = None) -> GroupedData:
    """Short-survival deaths versus long-survival censored patients.

    Rows dead of other causes are always excluded, as are rows outside both
    survival windows.
    """
    names = list(t.marker_names) if markers is None else list(markers)
    cols = [t.marker_names.index(m) for m in names]
    status = np.array([s.value for s in t.status])
    dead = (status == Status.DEAD_OF_DISEASE.value) & (t.survival_months < dead_max)
    alive = (status == Status.ALIVE.value) & (t.survival_months > alive_min)
    if not dead.any():
        raise DataError(f"no dead-of-disease samples with survival < {dead_max} months")
    if not alive.any():
        raise DataError(f"no alive samples with survival > {alive_min} months")
    rows = np.flatnonzero(dead | alive)
    if t.missing[np.ix_(rows, cols)].any():
        raise DataError("selected rows still contain missing cells; run prune_missing first")
    y = np.where(dead[rows], GROUP_DEAD, GROUP_ALIVE)
    return GroupedData(t.values[np.ix_(rows, cols)], y, names, [t.sample_ids[r] for r in rows])


def standardize_columns(X: np.ndarray, names: Sequence[str] | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        labels = [names[i] for i in bad] if names is not None else [str(i) for i in bad]
        raise DataError(f"zero-variance marker column(s): {', '.join(labels)}")
    return (X - X.mean(axis=0)) / sd


def normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DataError(f"zero row after column scaling at row(s) {np.flatnonzero(norms == 0).tolist()}")
    return X / norms[:, None]


def normalize(g: GroupedData) -> GroupedData:
    """Standardise each marker (n-1 variance), then scale each sample to unit norm."""
    X = normalize_rows(standardize_columns(g.X, g.marker_names))
    return replace(g, X=X)
