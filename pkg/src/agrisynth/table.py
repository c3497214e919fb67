"""Typed column store, CSV I/O and row filtering.

A :class:`Table` is an immutable, ordered mapping of column name to a
read-only numpy array. Four dtypes are supported:

``float64``  numpy float64
``int64``    numpy int64
``category`` numpy object array of ``str`` with a recorded vocabulary
``date``     numpy ``datetime64[D]``

Missing values are not representable; ingest fails instead.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import operator
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateHeaderError,
    IoFailureError,
    MalformedCsvError,
    TypeCoercionError,
    TypeMismatchError,
    UnknownColumnError,
)

DTYPES = ("float64", "int64", "category", "date")
NUMERIC = ("float64", "int64")

_INT_RE = re.compile(r"^[+-]?\d+$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass(frozen=True)
class Column:
    name: str
    dtype: str
    units: str | None = None
    categories: tuple[str, ...] | None = None


def _coerce(values: Any, dtype: str, name: str) -> np.ndarray:
    if dtype == "float64":
        arr = np.array(values, dtype=np.float64)
    elif dtype == "int64":
        raw = np.asarray(values)
        if raw.dtype.kind == "f":
            if raw.size and not np.all(raw == np.round(raw)):
                raise TypeCoercionError(f"column {name!r}: non-integral value for int64")
        arr = raw.astype(np.int64)
    elif dtype == "category":
        arr = np.array([str(v) for v in np.asarray(values, dtype=object).ravel()], dtype=object)
    elif dtype == "date":
        raw = np.asarray(values)
        if raw.dtype.kind == "M":
            arr = raw.astype("datetime64[D]")
        else:
            arr = np.array([_to_date64(v, name) for v in raw.ravel()], dtype="datetime64[D]")
    else:
        raise TypeCoercionError(f"column {name!r}: unknown dtype {dtype!r}")
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def _to_date64(v: Any, name: str) -> np.datetime64:
    if isinstance(v, np.datetime64):
        return v.astype("datetime64[D]")
    if isinstance(v, _dt.date):
        return np.datetime64(v.isoformat(), "D")
    if isinstance(v, str) and _DATE_RE.match(v):
        try:
            _dt.date.fromisoformat(v)
        except ValueError as exc:
            raise TypeCoercionError(f"column {name!r}: bad date {v!r}") from exc
        return np.datetime64(v, "D")
    raise TypeCoercionError(f"column {name!r}: cannot read {v!r} as an ISO date")


def _infer_dtype(values: Any) -> str:
    arr = np.asarray(values)
    kind = arr.dtype.kind
    if kind == "f":
        return "float64"
    if kind in "iub":
        return "int64"
    if kind == "M":
        return "date"
    if kind == "O" and arr.size and all(isinstance(v, _dt.date) for v in arr.ravel()):
        return "date"
    return "category"


class Table:
    """Immutable rectangular table.

    Parameters
    ----------
    data : mapping of str to array-like
        Column values in display order.
    dtypes : mapping of str to str, optional
        Forced dtypes; anything not listed is inferred from the array.
    units : mapping of str to str, optional
        Free-text units per column.
    categories : mapping of str to sequence of str, optional
        Vocabulary for category columns. Defaults to the sorted set of
        observed values.
    """

    __slots__ = ("_data", "_schema", "_n")

    def __init__(
        self,
        data: Mapping[str, Any],
        dtypes: Mapping[str, str] | None = None,
        units: Mapping[str, str | None] | None = None,
        categories: Mapping[str, Sequence[str]] | None = None,
    ):
        dtypes = dict(dtypes or {})
        units = dict(units or {})
        categories = dict(categories or {})
        cols: dict[str, np.ndarray] = {}
        schema: dict[str, Column] = {}
        n = None
        for name, values in data.items():
            if not isinstance(name, str) or not name:
                raise ValueError("column names must be non-empty strings")
            dtype = dtypes.get(name) or _infer_dtype(values)
            if dtype not in DTYPES:
                raise TypeCoercionError(f"column {name!r}: unknown dtype {dtype!r}")
            arr = _coerce(values, dtype, name)
            if dtype == "float64" and arr.size and not np.all(np.isfinite(arr)):
                raise TypeCoercionError(f"column {name!r}: non-finite values are not allowed")
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise MalformedCsvError(
                    f"column {name!r} has {len(arr)} values, expected {n}"
                )
            vocab = None
            if dtype == "category":
                observed = set(arr.tolist())
                if name in categories:
                    vocab = tuple(categories[name])
                    missing = observed - set(vocab)
                    if missing:
                        raise TypeCoercionError(
                            f"column {name!r}: values {sorted(missing)} not in vocabulary"
                        )
                else:
                    vocab = tuple(sorted(observed))
            arr.setflags(write=False)
            cols[name] = arr
            schema[name] = Column(name, dtype, units.get(name), vocab)
        self._data = cols
        self._schema = schema
        self._n = 0 if n is None else n

    # -- introspection ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self._n

    def __len__(self) -> int:
        return self._n

    @property
    def columns(self) -> list[str]:
        return list(self._data)

    @property
    def schema(self) -> dict[str, Column]:
        return dict(self._schema)

    def dtype(self, name: str) -> str:
        return self._column(name).dtype

    def _column(self, name: str) -> Column:
        try:
            return self._schema[name]
        except KeyError:
            raise UnknownColumnError(f"unknown column {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._data

    def __getitem__(self, name: str) -> np.ndarray:
        self._column(name)
        return self._data[name]

    def __repr__(self) -> str:
        cols = ", ".join(f"{c.name}:{c.dtype}" for c in self._schema.values())
        return f"Table({self._n} rows; {cols})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        if list(self._schema.items()) != list(other._schema.items()) or self._n != other._n:
            return False
        for name, arr in self._data.items():
            o = other._data[name]
            if arr.dtype.kind == "f":
                if arr.tobytes() != o.tobytes():
                    return False
            elif not np.array_equal(arr, o):
                return False
        return True

    __hash__ = None

    # -- derivation ---------------------------------------------------------

    def _rebuild(self, data: Mapping[str, Any], names: Iterable[str] | None = None) -> "Table":
        names = list(data) if names is None else list(names)
        dtypes, units, cats = {}, {}, {}
        for name in names:
            col = self._schema.get(name)
            if col is None:
                continue
            dtypes[name] = col.dtype
            units[name] = col.units
            if col.categories is not None:
                cats[name] = col.categories
        return Table({k: data[k] for k in names}, dtypes, units, cats)

    def select(self, names: Sequence[str]) -> "Table":
        for name in names:
            self._column(name)
        return self._rebuild(self._data, names)

    def drop(self, names: Sequence[str]) -> "Table":
        for name in names:
            self._column(name)
        return self.select([c for c in self.columns if c not in set(names)])

    def take(self, indices: Sequence[int] | np.ndarray) -> "Table":
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        idx = idx.astype(np.int64)
        return self._rebuild({k: v[idx] for k, v in self._data.items()})

    def head(self, n: int = 5) -> "Table":
        return self.take(np.arange(min(n, self._n)))

    def with_column(
        self,
        name: str,
        values: Any,
        dtype: str | None = None,
        units: str | None = None,
        categories: Sequence[str] | None = None,
    ) -> "Table":
        """Return a copy with ``name`` added, or replaced in place."""
        data = dict(self._data)
        data[name] = values
        dtypes = {k: c.dtype for k, c in self._schema.items()}
        unit_map = {k: c.units for k, c in self._schema.items()}
        cats = {k: c.categories for k, c in self._schema.items() if c.categories is not None}
        dtypes.pop(name, None)
        cats.pop(name, None)
        if dtype is not None:
            dtypes[name] = dtype
        if units is not None:
            unit_map[name] = units
        if categories is not None:
            cats[name] = tuple(categories)
        return Table(data, dtypes, unit_map, cats)

    def rename(self, mapping: Mapping[str, str]) -> "Table":
        data, dtypes, units, cats = {}, {}, {}, {}
        for name, col in self._schema.items():
            new = mapping.get(name, name)
            data[new] = self._data[name]
            dtypes[new] = col.dtype
            units[new] = col.units
            if col.categories is not None:
                cats[new] = col.categories
        return Table(data, dtypes, units, cats)

    def to_dict(self) -> dict[str, np.ndarray]:
        return dict(self._data)

    def rows(self) -> list[dict[str, Any]]:
        return [{k: v[i] for k, v in self._data.items()} for i in range(self._n)]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack numeric columns into an ``(n_rows, len(names))`` float array."""
        for name in names:
            if self._column(name).dtype not in NUMERIC:
                raise TypeMismatchError(f"column {name!r} is not numeric")
        if not names:
            return np.empty((self._n, 0))
        return np.column_stack([self._data[n].astype(np.float64) for n in names])

    @classmethod
    def from_rows(cls, rows: Sequence[Mapping[str, Any]], dtypes: Mapping[str, str] | None = None, **kw) -> "Table":
        if not rows:
            names = list(dtypes or {})
            return cls({n: [] for n in names}, dtypes, **kw)
        names = list(rows[0])
        return cls({n: [r[n] for r in rows] for n in names}, dtypes, **kw)


def concat(tables: Sequence[Table]) -> Table:
    """Stack tables with identical column names and dtypes row-wise.

    Category vocabularies are merged.
    """
    if not tables:
        raise ValueError("nothing to concatenate")
    first = tables[0]
    names = first.columns
    for t in tables[1:]:
        if t.columns != names:
            raise TypeMismatchError("column names differ between tables")
        for n in names:
            if t.dtype(n) != first.dtype(n):
                raise TypeMismatchError(f"column {n!r} dtype differs between tables")
    data, dtypes, units, cats = {}, {}, {}, {}
    for n in names:
        col = first.schema[n]
        data[n] = np.concatenate([t[n] for t in tables])
        dtypes[n] = col.dtype
        units[n] = col.units
        if col.dtype == "category":
            vocab: set[str] = set()
            for t in tables:
                vocab.update(t.schema[n].categories or ())
            cats[n] = tuple(sorted(vocab))
    return Table(data, dtypes, units, cats)


# -- quantiles ---------------------------------------------------------------


def quantile(values: Sequence[float] | np.ndarray, q: float) -> float:
    """Linear-interpolation quantile between order statistics (Hyndman-Fan type 7)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise ValueError("quantile of empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    h = (x.size - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


# -- predicates --------------------------------------------------------------

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


class Predicate:
    """Row predicate. Combine with ``&`` and ``|``; negate with ``~``."""

    def mask(self, table: Table) -> np.ndarray:
        raise NotImplementedError

    def columns(self) -> set[str]:
        return set()

    def __and__(self, other: "Predicate") -> "Predicate":
        return AllOf((self, other))

    def __or__(self, other: "Predicate") -> "Predicate":
        return AnyOf((self, other))

    def __invert__(self) -> "Predicate":
        return Not(self)


@dataclass(frozen=True)
class Always(Predicate):
    def mask(self, table: Table) -> np.ndarray:
        return np.ones(table.n_rows, dtype=bool)


TRUE = Always()


@dataclass(frozen=True)
class Cmp(Predicate):
    """``column <op> value`` where op is one of ``< <= > >= == !=``."""

    column: str
    op: str
    value: Any

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def columns(self) -> set[str]:
        return {self.column}

    def mask(self, table: Table) -> np.ndarray:
        arr = table[self.column]
        dtype = table.dtype(self.column)
        value = _comparable(self.value, dtype, self.column)
        if dtype == "category" and self.op not in ("==", "!="):
            raise TypeMismatchError(f"ordering comparison on category column {self.column!r}")
        return np.asarray(_OPS[self.op](arr, value), dtype=bool)


@dataclass(frozen=True)
class IsIn(Predicate):
    column: str
    values: tuple

    def __init__(self, column: str, values: Iterable[Any]):
        object.__setattr__(self, "column", column)
        object.__setattr__(self, "values", tuple(values))

    def columns(self) -> set[str]:
        return {self.column}

    def mask(self, table: Table) -> np.ndarray:
        arr = table[self.column]
        dtype = table.dtype(self.column)
        vals = [_comparable(v, dtype, self.column) for v in self.values]
        out = np.zeros(table.n_rows, dtype=bool)
        for v in vals:
            out |= np.asarray(arr == v, dtype=bool)
        return out


@dataclass(frozen=True)
class AllOf(Predicate):
    parts: tuple[Predicate, ...] = field(default_factory=tuple)

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts)) if self.parts else set()

    def mask(self, table: Table) -> np.ndarray:
        out = np.ones(table.n_rows, dtype=bool)
        for p in self.parts:
            out &= p.mask(table)
        return out


@dataclass(frozen=True)
class AnyOf(Predicate):
    parts: tuple[Predicate, ...] = field(default_factory=tuple)

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts)) if self.parts else set()

    def mask(self, table: Table) -> np.ndarray:
        out = np.zeros(table.n_rows, dtype=bool)
        for p in self.parts:
            out |= p.mask(table)
        return out


@dataclass(frozen=True)
class Not(Predicate):
    inner: Predicate

    def columns(self) -> set[str]:
        return self.inner.columns()

    def mask(self, table: Table) -> np.ndarray:
        return ~self.inner.mask(table)


def _comparable(value: Any, dtype: str, column: str) -> Any:
    if dtype in NUMERIC:
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.number)):
            raise TypeMismatchError(f"cannot compare numeric column {column!r} with {value!r}")
        return value
    if dtype == "category":
        if not isinstance(value, str):
            raise TypeMismatchError(f"cannot compare category column {column!r} with {value!r}")
        return value
    try:
        return _to_date64(value, column)
    except TypeCoercionError:
        raise TypeMismatchError(f"cannot compare date column {column!r} with {value!r}") from None


def parse_predicate(obj: Any) -> Predicate:
    """Build a predicate from plain data (as found in TOML configs).

    Accepted forms: ``True``; ``{"column", "op", "value"}``;
    ``{"column", "in": [...]}``; ``{"all": [...]}``; ``{"any": [...]}``;
    ``{"not": {...}}``.
    """
    if obj is True or obj is None:
        return TRUE
    if isinstance(obj, Predicate):
        return obj
    if isinstance(obj, Mapping):
        if "all" in obj:
            return AllOf(tuple(parse_predicate(p) for p in obj["all"]))
        if "any" in obj:
            return AnyOf(tuple(parse_predicate(p) for p in obj["any"]))
        if "not" in obj:
            return Not(parse_predicate(obj["not"]))
        if "in" in obj:
            return IsIn(obj["column"], obj["in"])
        return Cmp(obj["column"], obj["op"], obj["value"])
    if isinstance(obj, (list, tuple)) and len(obj) == 3:
        return Cmp(*obj)
    raise ValueError(f"cannot interpret predicate {obj!r}")


def filter_rows(table: Table, predicate: Predicate | Any) -> Table:
    """Rows satisfying ``predicate``, order preserved, schema unchanged."""
    predicate = parse_predicate(predicate)
    for name in predicate.columns():
        if name not in table:
            raise UnknownColumnError(f"unknown column {name!r}")
    return table.take(predicate.mask(table))


# -- CSV ---------------------------------------------------------------------


def _format_cell(value: Any, dtype: str) -> str:
    if dtype == "float64":
        return repr(float(value))
    if dtype == "int64":
        return str(int(value))
    if dtype == "date":
        return str(np.datetime64(value, "D"))
    return str(value)


def write_csv(table: Table, path: str | os.PathLike, schema_path: str | os.PathLike | None = None) -> None:
    """Write ``table`` as RFC 4180 CSV (UTF-8, CRLF line ends).

    Floats use the shortest repr that parses back to the identical double.
    The file is written to a temporary sibling and renamed into place.
    """
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(table.columns)
    cols = [(table[c], table.dtype(c)) for c in table.columns]
    for i in range(table.n_rows):
        writer.writerow([_format_cell(arr[i], dt) for arr, dt in cols])
    _atomic_write_text(Path(path), buf.getvalue())
    if schema_path is not None:
        write_schema(table, schema_path)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            tmp.unlink()
        except OSError:
            pass
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_schema(table: Table, path: str | os.PathLike) -> None:
    """Write the ``{column: {dtype, units[, categories]}}`` sidecar."""
    doc = {}
    for name, col in table.schema.items():
        entry: dict[str, Any] = {"dtype": col.dtype, "units": col.units}
        if col.categories is not None:
            entry["categories"] = list(col.categories)
        doc[name] = entry
    _atomic_write_text(Path(path), json.dumps(doc, indent=2) + "\n")


def read_schema(path: str | os.PathLike) -> dict[str, dict[str, Any]]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailureError(f"cannot read schema {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TypeCoercionError(f"schema {path} is not valid JSON: {exc}") from exc
    out = {}
    for name, entry in doc.items():
        if isinstance(entry, str):
            entry = {"dtype": entry}
        out[name] = dict(entry)
    return out


def _parse_column(name: str, raw: list[str], dtype: str | None) -> tuple[str, Any]:
    if dtype is None:
        nonempty = [v for v in raw if v != ""]
        if not raw:
            return "category", []
        if nonempty and all(_INT_RE.match(v) for v in nonempty):
            dtype = "int64"
        elif nonempty and all(_is_float(v) for v in nonempty):
            dtype = "float64"
        elif nonempty and len(nonempty) == len(raw) and all(_DATE_RE.match(v) for v in raw):
            dtype = "date"
        else:
            return "category", raw
        if len(nonempty) != len(raw):
            raise TypeCoercionError(f"column {name!r}: missing values in numeric column")
    if dtype == "int64":
        try:
            return dtype, [int(v) for v in raw]
        except ValueError as exc:
            raise TypeCoercionError(f"column {name!r}: {exc}") from exc
    if dtype == "float64":
        try:
            vals = [float(v) for v in raw]
        except ValueError as exc:
            raise TypeCoercionError(f"column {name!r}: {exc}") from exc
        if any(not math.isfinite(v) for v in vals):
            raise TypeCoercionError(f"column {name!r}: non-finite value")
        return dtype, vals
    if dtype == "date":
        return dtype, [_to_date64(v, name) for v in raw]
    if dtype == "category":
        return dtype, raw
    raise TypeCoercionError(f"column {name!r}: unknown dtype {dtype!r}")


def _is_float(v: str) -> bool:
    try:
        return math.isfinite(float(v))
    except ValueError:
        return False


def read_csv(
    path: str | os.PathLike,
    schema: Mapping[str, Any] | str | os.PathLike | None = None,
) -> Table:
    """Parse a headed CSV file into a :class:`Table`.

    ``schema`` may be a mapping ``{column: dtype}`` or
    ``{column: {"dtype": ..., "units": ...}}``, or a path to a JSON sidecar
    of the latter form. Columns absent from the schema are inferred:
    int64, then float64, then date, then category.
    """
    if schema is not None and not isinstance(schema, Mapping):
        schema = read_schema(schema)
    schema = {k: ({"dtype": v} if isinstance(v, str) else dict(v)) for k, v in (schema or {}).items()}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            records = list(csv.reader(fh, strict=True))
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    except csv.Error as exc:
        raise MalformedCsvError(f"{path}: {exc}") from exc
    if not records:
        raise MalformedCsvError(f"{path}: missing header row")
    header, body = records[0], records[1:]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DuplicateHeaderError(f"{path}: duplicate header(s) {dupes}")
    if any(h == "" for h in header):
        raise MalformedCsvError(f"{path}: empty column name in header")
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise MalformedCsvError(
                f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
            )
    data, dtypes, units, cats = {}, {}, {}, {}
    for j, name in enumerate(header):
        entry = schema.get(name, {})
        dtype, values = _parse_column(name, [r[j] for r in body], entry.get("dtype"))
        data[name] = values
        dtypes[name] = dtype
        units[name] = entry.get("units")
        if dtype == "category" and entry.get("categories") is not None:
            cats[name] = entry["categories"]
    return Table(data, dtypes, units, cats)
