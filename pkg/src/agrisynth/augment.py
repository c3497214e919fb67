"""Grow an existing table with synthetic rows.

Every function returns the original rows first, unchanged, followed by the
new rows, and appends (or updates) a ``synthetic`` provenance column whose
values are the strings ``"true"`` / ``"false"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateIndexError,
    EmptyStratumError,
    InvalidSpecError,
    KTooLargeError,
    NonNumericColumnError,
    NonNumericFeatureError,
    TooFewRowsError,
    UnknownColumnError,
)
from .rng import Rng
from .table import Predicate, Table, concat, parse_predicate

PROVENANCE = "synthetic"
_BOOL = ("false", "true")


def _with_provenance(table: Table) -> Table:
    if PROVENANCE in table:
        return table
    return table.with_column(PROVENANCE, ["false"] * table.n_rows, dtype="category", categories=_BOOL)


def _append(table: Table, new_cols: Mapping[str, Any]) -> Table:
    """Concatenate ``table`` (with provenance) and a block of new rows."""
    base = _with_provenance(table)
    n_new = len(next(iter(new_cols.values()))) if new_cols else 0
    cols = dict(new_cols)
    cols[PROVENANCE] = ["true"] * n_new
    block = Table(
        {c: cols[c] for c in base.columns},
        {c: col.dtype for c, col in base.schema.items()},
        {c: col.units for c, col in base.schema.items()},
        {c: (_BOOL if c == PROVENANCE else col.categories)
         for c, col in base.schema.items() if col.categories is not None},
    )
    return concat([base, block])


def growth_rows(n_rows: int, growth_pct: float) -> int:
    """``round(growth_pct/100 * n_rows)`` with halves rounded up."""
    exact = Decimal(str(growth_pct)) * n_rows / Decimal(100)
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


# -- SMOTE ----------------------------------------------------------------------


def _zscore_params(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mean, sd


def neighbor_table(Z: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of ``Z`` (ties: lowest index)."""
    n = Z.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, n * Z.shape[1]))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d2 = ((Z[start:stop, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def _smote_block(
    table: Table,
    rows: np.ndarray,
    feature_cols: Sequence[str],
    k: int,
    n_new: int,
    rng: Rng,
    scale: tuple[np.ndarray, np.ndarray] | None,
) -> dict[str, np.ndarray]:
    """New SMOTE rows seeded from ``rows`` (indices into ``table``)."""
    X = table.matrix(feature_cols)[rows]
    mean, sd = scale if scale is not None else _zscore_params(X)
    nn = neighbor_table((X - mean) / sd, k)

    seeds = np.empty(n_new, dtype=np.int64)
    partners = np.empty(n_new, dtype=np.int64)
    lam = np.empty(n_new)
    for i in range(n_new):
        s = rng.integers(len(rows))
        seeds[i] = s
        partners[i] = nn[s, rng.integers(k)]
        lam[i] = rng.random()

    src = rows[seeds]
    dst = rows[partners]
    out = {}
    for name in table.columns:
        arr = table[name]
        if table.dtype(name) == "float64":
            out[name] = arr[src] + lam * (arr[dst] - arr[src])
        else:
            out[name] = arr[src]
    return out


def _check_features(table: Table, feature_cols: Sequence[str]) -> None:
    if not feature_cols:
        raise NonNumericFeatureError("at least one feature column is required")
    for c in feature_cols:
        if c not in table:
            raise UnknownColumnError(f"unknown column {c!r}")
        if table.dtype(c) != "float64":
            raise NonNumericFeatureError(f"feature {c!r} is {table.dtype(c)}, expected float64")


def smote_augment(
    table: Table,
    feature_cols: Sequence[str],
    k: int,
    n_new: int,
    rng: Rng,
) -> Table:
    """SMOTE interpolation for tabular regression data.

    A seed row is chosen uniformly, one of its ``k`` nearest neighbours
    (Euclidean on z-scored ``feature_cols``) is chosen uniformly, and the new
    row is ``seed + lam * (neighbour - seed)`` with ``lam ~ U[0, 1)``.
    Every float column, the target included, is interpolated with the same
    ``lam``; int, category and date columns are copied from the seed row.
    """
    _check_features(table, feature_cols)
    if table.n_rows < 2:
        raise TooFewRowsError("SMOTE needs at least 2 rows")
    if k < 1 or k > table.n_rows - 1:
        raise KTooLargeError(f"k={k} must lie in [1, {table.n_rows - 1}]")
    if n_new < 0:
        raise InvalidSpecError("n_new must be >= 0")
    if n_new == 0:
        return _with_provenance(table)
    rows = np.arange(table.n_rows)
    return _append(table, _smote_block(table, rows, feature_cols, k, n_new, rng, None))


# -- jitter -------------------------------------------------------------------


def jitter_augment(table: Table, sigmas: Mapping[str, float], n_new: int, rng: Rng) -> Table:
    """Resample rows uniformly and add independent normal noise per column."""
    for c, s in sigmas.items():
        if c not in table:
            raise UnknownColumnError(f"unknown column {c!r}")
        if table.dtype(c) != "float64":
            raise NonNumericColumnError(f"cannot jitter {table.dtype(c)} column {c!r}")
        if s < 0:
            raise InvalidSpecError(f"sigma for {c!r} must be >= 0")
    if table.n_rows == 0 and n_new > 0:
        raise TooFewRowsError("cannot resample from an empty table")
    pick = rng.integers(table.n_rows, size=n_new) if n_new else np.empty(0, dtype=np.int64)
    out = {name: table[name][pick] for name in table.columns}
    for c, s in sigmas.items():
        out[c] = out[c] + rng.split(f"jitter:{c}").normal(0.0, s, size=n_new)
    return _append(table, out)


# -- linear extrapolation -------------------------------------------------------


def fit_trend(index: np.ndarray, values: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Least-squares line ``values ~ intercept + slope*index``.

    Returns ``(intercept, slope, residuals)``.
    """
    x = np.asarray(index, dtype=float)
    y = np.asarray(values, dtype=float)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    slope = float(dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    return intercept, slope, y - (intercept + slope * x)


def extrapolate_augment(table: Table, index_col: str, horizon: int, rng: Rng) -> Table:
    """Extend every float column past the last index value along its OLS trend.

    New index values step by the median gap between distinct observed
    values. Each extrapolated value is the fitted trend plus one residual
    resampled from that column's fit. Non-float columns copy the row with
    the largest index.
    """
    if index_col not in table:
        raise UnknownColumnError(f"unknown column {index_col!r}")
    dtype = table.dtype(index_col)
    if dtype == "category":
        raise DegenerateIndexError(f"index column {index_col!r} must be numeric or date")
    raw = table[index_col]
    x = raw.astype("datetime64[D]").astype(np.int64).astype(float) if dtype == "date" else raw.astype(float)
    distinct = np.unique(x)
    if distinct.size < 3:
        raise DegenerateIndexError(f"index {index_col!r} has {distinct.size} distinct values; need 3")
    if horizon < 0:
        raise InvalidSpecError("horizon must be >= 0")
    step = float(np.median(np.diff(distinct)))
    if dtype != "float64":
        step = max(1.0, float(np.floor(step + 0.5)))
    new_x = distinct[-1] + step * np.arange(1, horizon + 1)

    last = int(np.argmax(x))
    out: dict[str, Any] = {}
    for name in table.columns:
        if name == index_col:
            if dtype == "date":
                out[name] = new_x.astype(np.int64).astype("datetime64[D]")
            elif dtype == "int64":
                out[name] = new_x.astype(np.int64)
            else:
                out[name] = new_x
        elif table.dtype(name) == "float64":
            a, b, resid = fit_trend(x, table[name])
            picks = rng.split(f"residual:{name}").integers(len(resid), size=horizon) if horizon else []
            out[name] = a + b * new_x + (resid[picks] if horizon else np.empty(0))
        else:
            out[name] = np.repeat(table[name][last:last + 1], horizon)
    return _append(table, out)


# -- plans ----------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentPlan:
    """How to grow a table.

    Exactly one of ``n_new`` / ``growth_pct`` must be set; ``growth_pct``
    is a percentage of the *whole* input table's row count.
    """

    method: str = "smote"
    feature_cols: tuple[str, ...] = ()
    k: int = 5
    sigmas: Mapping[str, float] = field(default_factory=dict)
    index_col: str | None = None
    stratum: Predicate | None = None
    n_new: int | None = None
    growth_pct: float | None = None

    def validate(self) -> None:
        if self.method not in ("smote", "jitter", "extrapolate"):
            raise InvalidSpecError(f"unknown augmentation method {self.method!r}")
        if (self.n_new is None) == (self.growth_pct is None):
            raise InvalidSpecError("set exactly one of n_new or growth_pct")
        if self.n_new is not None and self.n_new < 0:
            raise InvalidSpecError("n_new must be >= 0")
        if self.growth_pct is not None and self.growth_pct < 0:
            raise InvalidSpecError("growth_pct must be >= 0")
        if self.k < 1:
            raise InvalidSpecError("k must be >= 1")
        if self.method == "extrapolate" and not self.index_col:
            raise InvalidSpecError("extrapolate needs index_col")

    def rows_for(self, n_rows: int) -> int:
        return self.n_new if self.n_new is not None else growth_rows(n_rows, self.growth_pct)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AugmentPlan":
        doc = dict(doc)
        if "stratum" in doc:
            doc["stratum"] = parse_predicate(doc["stratum"])
        if "feature_cols" in doc:
            doc["feature_cols"] = tuple(doc["feature_cols"])
        return cls(**doc)


def stratified_oversample(table: Table, plan: AugmentPlan, rng: Rng) -> Table:
    """Apply ``plan.method`` only within the rows matched by ``plan.stratum``.

    For SMOTE, neighbours are searched inside the stratum while z-scoring
    uses the whole table's mean and standard deviation; ``k`` is capped at
    the stratum size minus one.
    """
    plan.validate()
    n_new = plan.rows_for(table.n_rows)
    stratum = parse_predicate(plan.stratum)
    for c in stratum.columns():
        if c not in table:
            raise UnknownColumnError(f"unknown column {c!r}")
    rows = np.flatnonzero(stratum.mask(table))
    if rows.size == 0:
        raise EmptyStratumError("stratum matches no rows")

    if plan.method == "smote":
        _check_features(table, plan.feature_cols)
        if rows.size < 2:
            raise TooFewRowsError("SMOTE needs at least 2 stratum rows")
        k = min(plan.k, rows.size - 1)
        if n_new == 0:
            return _with_provenance(table)
        scale = _zscore_params(table.matrix(plan.feature_cols))
        return _append(table, _smote_block(table, rows, plan.feature_cols, k, n_new, rng, scale))

    sub = table.take(rows)
    if plan.method == "jitter":
        grown = jitter_augment(sub, plan.sigmas, n_new, rng)
    else:
        grown = extrapolate_augment(sub, plan.index_col, n_new, rng)
    new_rows = grown.take(np.arange(sub.n_rows, grown.n_rows))
    return _append(table, {c: new_rows[c] for c in table.columns})
