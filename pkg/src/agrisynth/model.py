"""Surrogate yield regressors, stacking, temporal holdout and error metrics."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (
    EmptySideError,
    InvalidSpecError,
    KTooLargeError,
    SingularSystemError,
    TooFewRowsError,
    UnknownColumnError,
    UnknownSeasonError,
    ZeroTargetError,
)
from .rng import Rng
from .table import NUMERIC, Table

FORMAT = "agrisynth-model"
FORMAT_VERSION = 1

Features = Union[Table, np.ndarray]


# -- specs ----------------------------------------------------------------------


@dataclass(frozen=True)
class RidgeSpec:
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidSpecError("ridge lambda must be >= 0")


@dataclass(frozen=True)
class KnnSpec:
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSpecError("knn k must be >= 1")


@dataclass(frozen=True)
class TreeSpec:
    max_depth: int = 6
    min_leaf: int = 5

    def __post_init__(self):
        if self.max_depth < 1 or self.min_leaf < 1:
            raise InvalidSpecError("tree max_depth and min_leaf must be >= 1")


RegressorSpec = Union[RidgeSpec, KnnSpec, TreeSpec]


@dataclass(frozen=True)
class StackSpec:
    bases: tuple = (RidgeSpec(1.0), KnnSpec(10), TreeSpec(6, 5))
    folds: int = 5

    def __post_init__(self):
        if len(self.bases) < 2:
            raise InvalidSpecError("a stack needs at least 2 base regressors")
        if self.folds < 2:
            raise InvalidSpecError("folds must be >= 2")


def spec_from_dict(doc: dict) -> RegressorSpec:
    kind = doc.get("kind")
    if kind == "ridge":
        return RidgeSpec(float(doc.get("lam", 1.0)))
    if kind == "knn":
        return KnnSpec(int(doc.get("k", 10)))
    if kind == "tree":
        return TreeSpec(int(doc.get("max_depth", 6)), int(doc.get("min_leaf", 5)))
    raise InvalidSpecError(f"unknown regressor kind {kind!r}")


# -- helpers --------------------------------------------------------------------


def _design(X: Features, names: Sequence[str] | None = None) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(X, Table):
        if names is None:
            names = tuple(c for c in X.columns if X.dtype(c) in NUMERIC)
        for c in names:
            if c not in X:
                raise UnknownColumnError(f"unknown column {c!r}")
        return X.matrix(names), tuple(names)
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A, None if names is None else tuple(names)


def _target(y: Any) -> np.ndarray:
    return np.asarray(y, dtype=float).ravel()


class Regressor:
    """Common surface: ``predict`` plus JSON round-trip."""

    kind = ""
    feature_names: tuple[str, ...] | None = None

    def _matrix(self, X: Features) -> np.ndarray:
        return _design(X, self.feature_names)[0]

    def predict(self, X: Features) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def save(self, path: str | os.PathLike) -> None:
        doc = {"format": FORMAT, "version": FORMAT_VERSION, "model": self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# -- ridge ------------------------------------------------------------------------


class RidgeModel(Regressor):
    kind = "ridge"

    def __init__(self, intercept: float, coef: np.ndarray, feature_names=None, lam: float = 0.0):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.feature_names = feature_names
        self.lam = lam

    def predict(self, X: Features) -> np.ndarray:
        return self.intercept + self._matrix(X) @ self.coef

    def to_dict(self) -> dict:
        return {"kind": "ridge", "lam": self.lam, "intercept": self.intercept,
                "coef": self.coef.tolist(), "feature_names": _names(self.feature_names)}


def fit_ridge(spec: RidgeSpec, X: Features, y) -> RidgeModel:
    """Solve ``(Xc'Xc + lam I) b = Xc'yc`` by Cholesky on centred data.

    Centring leaves the intercept unpenalised.
    """
    A, names = _design(X)
    y = _target(y)
    if A.shape[0] < 1:
        raise TooFewRowsError("ridge needs at least one row")
    xm = A.mean(axis=0)
    ym = y.mean()
    Ac = A - xm
    G = Ac.T @ Ac + spec.lam * np.eye(A.shape[1])
    try:
        c = cho_factor(G)
    except LinAlgError as exc:
        raise SingularSystemError("normal equations are singular; use lam > 0") from exc
    diag = np.diag(c[0])
    if spec.lam == 0 and diag.size and np.min(np.abs(diag)) <= 1e-7 * max(1.0, np.max(np.abs(diag))):
        raise SingularSystemError("design matrix is rank deficient; use lam > 0")
    b = cho_solve(c, Ac.T @ (y - ym))
    return RidgeModel(ym - xm @ b, b, names, spec.lam)


# -- k nearest neighbours ------------------------------------------------------------


class KnnModel(Regressor):
    kind = "knn"

    def __init__(self, k: int, X: np.ndarray, y: np.ndarray, mean, scale, feature_names=None):
        self.k = k
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.feature_names = feature_names
        self._Z = (self.X - self.mean) / self.scale

    def predict(self, X: Features) -> np.ndarray:
        Q = (self._matrix(X) - self.mean) / self.scale
        out = np.empty(Q.shape[0])
        chunk = max(1, 2_000_000 // max(1, self._Z.size))
        for s in range(0, Q.shape[0], chunk):
            d2 = ((Q[s:s + chunk, None, :] - self._Z[None, :, :]) ** 2).sum(axis=2)
            idx = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[s:s + chunk] = self.y[idx].mean(axis=1)
        return out

    def to_dict(self) -> dict:
        return {"kind": "knn", "k": self.k, "X": self.X.tolist(), "y": self.y.tolist(),
                "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "feature_names": _names(self.feature_names)}


def fit_knn(spec: KnnSpec, X: Features, y) -> KnnModel:
    A, names = _design(X)
    y = _target(y)
    if spec.k > A.shape[0]:
        raise KTooLargeError(f"k={spec.k} exceeds {A.shape[0]} training rows")
    mean = A.mean(axis=0)
    sd = A.std(axis=0)
    sd[sd == 0] = 1.0
    return KnnModel(spec.k, A, y, mean, sd, names)


# -- regression tree --------------------------------------------------------------


class TreeModel(Regressor):
    """Flat-array binary tree; ``feature[i] == -1`` marks a leaf."""

    kind = "tree"

    def __init__(self, feature, threshold, left, right, value, feature_names=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.feature_names = feature_names

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: Features) -> np.ndarray:
        A = self._matrix(X)
        node = np.zeros(A.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            f = self.feature[node[rows]]
            go_left = A[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {"kind": "tree", "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist(),
                "feature_names": _names(self.feature_names)}


def _best_split(A: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float]:
    """Return ``(feature, threshold, sse_reduction)``; feature -1 if none."""
    n = y.size
    total = y.sum()
    parent = float(((y - y.mean()) ** 2).sum())
    best = (-1, 0.0, 0.0)
    for f in range(A.shape[1]):
        order = np.argsort(A[:, f], kind="stable")
        x = A[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        i = np.arange(min_leaf, n - min_leaf + 1)  # size of left side
        if i.size == 0:
            continue
        valid = x[i - 1] < x[np.minimum(i, n - 1)]
        if not np.any(valid):
            continue
        i = i[valid]
        nl = i.astype(float)
        nr = n - nl
        sl = csum[i - 1]
        sr = total - sl
        ql = csq[i - 1]
        qr = csq[-1] - ql
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        j = int(np.argmin(sse))
        gain = parent - float(sse[j])
        if gain > best[2] + 1e-12 * max(1.0, parent):
            k = i[j]
            best = (f, 0.5 * (x[k - 1] + x[k]), gain)
    return best


def fit_tree(spec: TreeSpec, X: Features, y) -> TreeModel:
    """Greedy CART regression tree on variance reduction."""
    A, names = _design(X)
    y = _target(y)
    if A.shape[0] < 1:
        raise TooFewRowsError("tree needs at least one row")
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        if depth >= spec.max_depth or rows.size < 2 * spec.min_leaf:
            return node
        f, t, gain = _best_split(A[rows], y[rows], spec.min_leaf)
        if f < 0 or gain <= 0:
            return node
        mask = A[rows, f] <= t
        feature[node] = f
        threshold[node] = t
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(A.shape[0]), 0)
    return TreeModel(feature, threshold, left, right, value, names)


# -- dispatch -----------------------------------------------------------------------


def fit(spec: RegressorSpec, X: Features, y) -> Regressor:
    """Fit one base regressor. Tables contribute all their numeric columns."""
    if isinstance(spec, RidgeSpec):
        return fit_ridge(spec, X, y)
    if isinstance(spec, KnnSpec):
        return fit_knn(spec, X, y)
    if isinstance(spec, TreeSpec):
        return fit_tree(spec, X, y)
    raise InvalidSpecError(f"unknown regressor spec {spec!r}")


def predict(model: Regressor, X: Features) -> np.ndarray:
    return model.predict(X)


# -- stacking -------------------------------------------------------------------------


class StackedModel(Regressor):
    """Base regressors combined by an OLS meta-learner with intercept."""

    kind = "stacked"

    def __init__(self, bases: Sequence[Regressor], meta_intercept: float, meta_coef, feature_names=None):
        self.bases = list(bases)
        self.meta_intercept = float(meta_intercept)
        self.meta_coef = np.asarray(meta_coef, dtype=float)
        self.feature_names = feature_names

    def base_predictions(self, X: Features) -> np.ndarray:
        A = self._matrix(X)
        return np.column_stack([b.predict(A) for b in self.bases])

    def predict(self, X: Features) -> np.ndarray:
        return self.meta_intercept + self.base_predictions(X) @ self.meta_coef

    def to_dict(self) -> dict:
        return {"kind": "stacked", "meta_intercept": self.meta_intercept,
                "meta_coef": self.meta_coef.tolist(), "bases": [b.to_dict() for b in self.bases],
                "feature_names": _names(self.feature_names)}


def fold_assignment(n: int, folds: int, rng: Rng) -> np.ndarray:
    """Fold id per row: position in a seeded shuffle, modulo ``folds``."""
    perm = rng.permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def fit_stacked(spec: StackSpec, X: Features, y, rng: Rng) -> StackedModel:
    """Out-of-fold base predictions feed an OLS meta-learner; bases are then
    refit on every row."""
    A, names = _design(X)
    y = _target(y)
    n = A.shape[0]
    if n < spec.folds:
        raise TooFewRowsError(f"{n} rows cannot fill {spec.folds} folds")
    fold = fold_assignment(n, spec.folds, rng)
    oof = np.empty((n, len(spec.bases)))
    for f in range(spec.folds):
        test = fold == f
        for j, base in enumerate(spec.bases):
            m = fit(base, A[~test], y[~test])
            oof[test, j] = m.predict(A[test])
    design = np.column_stack([np.ones(n), oof])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    bases = [fit(b, A, y) for b in spec.bases]
    return StackedModel(bases, beta[0], beta[1:], names)


# -- serialization -------------------------------------------------------------------


def _names(names):
    return None if names is None else list(names)


def model_from_dict(doc: dict) -> Regressor:
    kind = doc.get("kind")
    names = tuple(doc["feature_names"]) if doc.get("feature_names") is not None else None
    if kind == "ridge":
        return RidgeModel(doc["intercept"], doc["coef"], names, doc.get("lam", 0.0))
    if kind == "knn":
        return KnnModel(doc["k"], doc["X"], doc["y"], doc["mean"], doc["scale"], names)
    if kind == "tree":
        return TreeModel(doc["feature"], doc["threshold"], doc["left"], doc["right"], doc["value"], names)
    if kind == "stacked":
        return StackedModel([model_from_dict(b) for b in doc["bases"]],
                            doc["meta_intercept"], doc["meta_coef"], names)
    raise InvalidSpecError(f"unknown model kind {kind!r}")


def load_model(path: str | os.PathLike) -> Regressor:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise InvalidSpecError(f"{path} is not a saved model")
    if doc.get("version") != FORMAT_VERSION:
        raise InvalidSpecError(f"unsupported model format version {doc.get('version')}")
    return model_from_dict(doc["model"])


# -- evaluation ------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    mape: float
    rmse: float
    r2: float

    def to_dict(self) -> dict:
        return {"mape": self.mape, "rmse": self.rmse, "r2": self.r2}


def metrics(y_true, y_pred) -> EvalReport:
    """MAPE (percent), RMSE and R^2. Zero targets are an error, not a fudge."""
    y = _target(y_true)
    yhat = _target(y_pred)
    if y.size == 0:
        raise TooFewRowsError("no rows to evaluate")
    if np.any(y == 0):
        raise ZeroTargetError("MAPE is undefined when a target is zero")
    resid = y - yhat
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return EvalReport(
        mape=float(np.mean(np.abs(resid) / np.abs(y)) * 100.0),
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        r2=r2,
    )


def evaluate(model: Regressor, X_test: Features, y_test) -> EvalReport:
    return metrics(y_test, model.predict(X_test))


# -- temporal holdout ------------------------------------------------------------------


def temporal_split(table: Table, season_col: str, test_seasons: Sequence[str]) -> tuple[Table, Table]:
    """Hold out whole seasons: ``test`` gets ``test_seasons``, ``train`` the rest."""
    if season_col not in table:
        raise UnknownColumnError(f"unknown column {season_col!r}")
    test_seasons = list(test_seasons)
    if not test_seasons:
        raise UnknownSeasonError("test_seasons must not be empty")
    col = table[season_col]
    if table.dtype(season_col) != "category":
        col = np.array([str(v) for v in col], dtype=object)
    observed = set(col.tolist())
    missing = [s for s in test_seasons if str(s) not in observed]
    if missing:
        raise UnknownSeasonError(f"season(s) {missing} not present in {season_col!r}")
    mask = np.isin(col, [str(s) for s in test_seasons])
    if mask.all() or not mask.any():
        raise EmptySideError("temporal split leaves one side empty")
    return table.take(~mask), table.take(mask)
