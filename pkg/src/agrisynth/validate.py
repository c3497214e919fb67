"""Real-versus-synthetic similarity metrics and plausibility checks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import (
    EmptySampleError,
    InvalidSpecError,
    SingularCovarianceError,
    TooFewRowsError,
    UnknownColumnError,
    ZeroVarianceError,
)
from .table import NUMERIC, Table


# -- Kolmogorov-Smirnov ---------------------------------------------------------


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution.

    ``Q(lam) = 2 * sum_{j>=1} (-1)**(j-1) * exp(-2 j**2 lam**2)``.
    For ``lam < 1`` the alternating series converges slowly, so the
    equivalent theta-function form
    ``1 - sqrt(2 pi)/lam * sum_{k>=1} exp(-(2k-1)**2 pi**2 / (8 lam**2))`` is
    summed instead.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        s = 0.0
        for k in range(1, 50):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * lam * lam))
            s += term
            if term < 1e-17 * s:
                break
        q = 1.0 - math.sqrt(2.0 * math.pi) / lam * s
    else:
        q = 0.0
        for j in range(1, 101):
            term = math.exp(-2.0 * j * j * lam * lam)
            q += term if j % 2 else -term
            if term < 1e-17:
                break
        q *= 2.0
    return min(1.0, max(0.0, q))


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` evaluated at every observed point."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("KS test needs non-empty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic two-sided p-value.

    The p-value uses the effective size ``n_e = n_a*n_b/(n_a+n_b)`` and
    ``Q(sqrt(n_e) * D)``, with no small-sample correction.
    """
    d = ks_statistic(a, b)
    na, nb = len(a), len(b)
    ne = na * nb / (na + nb)
    return d, kolmogorov_sf(math.sqrt(ne) * d)


# -- histogram overlap ----------------------------------------------------------


def overlap_coefficient(a: Sequence[float], b: Sequence[float], bins: int = 20) -> float:
    """Sum over shared equal-width bins of ``min(p_i, q_i)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("overlap needs non-empty samples")
    if bins < 1:
        raise InvalidSpecError("bins must be >= 1")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    # integer counts cross-scaled so identical samples give exactly 1
    ca = np.histogram(a, edges)[0].astype(np.int64)
    cb = np.histogram(b, edges)[0].astype(np.int64)
    shared = int(np.minimum(ca * b.size, cb * a.size).sum())
    return min(1.0, shared / (a.size * b.size))


# -- PCA ------------------------------------------------------------------------


def jacobi_eigh(S: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns,
    unsorted.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    V = np.eye(n)
    scale = max(1.0, float(np.abs(A).max())) if n else 1.0
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum(np.triu(A, 1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J, rows/cols p and q only
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V


@dataclass(frozen=True, eq=False)
class PCAResult:
    """Principal axes of z-scored data.

    ``eigenvalues``/``ratios`` cover every component; ``components`` holds
    the first ``n_components`` loading vectors as rows.
    """

    feature_cols: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    eigenvalues: np.ndarray
    axes: np.ndarray
    n_components: int

    @property
    def ratios(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        return self.eigenvalues / total

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.ratios[: self.n_components]

    @property
    def components(self) -> np.ndarray:
        return self.axes[:, : self.n_components].T

    def __iter__(self):
        # allows ``components, ratios = pca_fit(...)``
        return iter((self.components, self.explained_variance_ratio))

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def transform(self, X: np.ndarray | Table, n: int | None = None) -> np.ndarray:
        if isinstance(X, Table):
            X = X.matrix(self.feature_cols)
        n = self.n_components if n is None else n
        return self.standardize(X) @ self.axes[:, :n]

    def reconstruction_error(self, X: np.ndarray | Table, n: int) -> float:
        """Mean squared error in z-space after projecting onto ``n`` axes."""
        if isinstance(X, Table):
            X = X.matrix(self.feature_cols)
        Z = self.standardize(X)
        W = self.axes[:, :n]
        return float(np.mean((Z - Z @ W @ W.T) ** 2))


def pca_fit(table: Table, feature_cols: Sequence[str], n_components: int | None = None) -> PCAResult:
    """PCA on z-scored columns via Jacobi decomposition of the sample covariance.

    Components are ordered by descending eigenvalue and signed so that each
    one's largest-magnitude loading is positive.
    """
    feature_cols = tuple(feature_cols)
    for c in feature_cols:
        if c not in table:
            raise UnknownColumnError(f"unknown column {c!r}")
    X = table.matrix(feature_cols)
    n, p = X.shape
    if n_components is None:
        n_components = p
    if not 1 <= n_components <= p:
        raise InvalidSpecError(f"n_components must lie in [1, {p}]")
    if n < 2:
        raise TooFewRowsError("PCA needs at least 2 rows")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    flat = [c for c, s in zip(feature_cols, sd) if not s > 0]
    if flat:
        raise ZeroVarianceError(f"constant feature(s): {flat}")
    Z = (X - mean) / sd
    cov = Z.T @ Z / (n - 1)
    w, V = jacobi_eigh(cov)
    w = np.clip(w, 0.0, None)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for j in range(p):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return PCAResult(feature_cols, mean, sd, w, V, n_components)


def mahalanobis_overlap(
    real: Table,
    synth: Table,
    feature_cols: Sequence[str],
    n_pc: int = 2,
    coverage: float = 0.997,
) -> float:
    """Share of synthetic rows inside the real data's chi-square ellipsoid.

    PCA is fitted on ``real``; both tables are projected onto the first
    ``n_pc`` axes, and a synthetic point counts as overlapping when its
    squared Mahalanobis distance to the real projections is at most the
    ``coverage`` quantile of chi-square with ``n_pc`` degrees of freedom.
    """
    if synth.n_rows == 0:
        raise EmptySampleError("synthetic table is empty")
    if real.n_rows <= n_pc:
        raise TooFewRowsError("real table needs more rows than principal components")
    if not 0.0 < coverage < 1.0:
        raise InvalidSpecError("coverage must lie in (0, 1)")
    pca = pca_fit(real, feature_cols, n_pc)
    R = pca.transform(real, n_pc)
    S = pca.transform(synth, n_pc)
    mu = R.mean(axis=0)
    C = np.atleast_2d(np.cov(R, rowvar=False))
    try:
        Ci = np.linalg.inv(C)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("projected covariance is singular") from exc
    if not np.all(np.isfinite(Ci)) or np.linalg.cond(C) > 1e12:
        raise SingularCovarianceError("projected covariance is singular")
    D = S - mu
    d2 = np.einsum("ij,jk,ik->i", D, Ci, D)
    return float(np.mean(d2 <= chi2.ppf(coverage, n_pc)))


# -- plausibility ---------------------------------------------------------------


@dataclass(frozen=True)
class PlausibilityRule:
    """Either an interval bound on ``column`` or ``column <= other``.

    Use :meth:`interval` or :meth:`ordered` to build one.
    """

    column: str
    lo: float = -math.inf
    hi: float = math.inf
    other: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidSpecError(f"rule on {self.column!r}: lo > hi")
        if not self.name:
            label = (f"{self.column} <= {self.other}" if self.other
                     else f"{self.column} in [{self.lo:g}, {self.hi:g}]")
            object.__setattr__(self, "name", label)

    @classmethod
    def interval(cls, column: str, lo: float = -math.inf, hi: float = math.inf) -> "PlausibilityRule":
        return cls(column, lo, hi)

    @classmethod
    def ordered(cls, lesser: str, greater: str) -> "PlausibilityRule":
        return cls(lesser, other=greater)

    def columns(self) -> list[str]:
        return [self.column] + ([self.other] if self.other else [])

    def passes(self, table: Table) -> np.ndarray:
        x = table[self.column]
        if self.other is not None:
            return np.asarray(x <= table[self.other], dtype=bool)
        return (x >= self.lo) & (x <= self.hi)


@dataclass(frozen=True)
class RuleResult:
    rule: str
    passed: int
    failed: int
    examples: tuple[int, ...]


def check_plausibility(table: Table, rules: Sequence[PlausibilityRule]) -> list[RuleResult]:
    """Per rule: passing and failing row counts plus up to five failing row indices."""
    out = []
    for rule in rules:
        for c in rule.columns():
            if c not in table:
                raise UnknownColumnError(f"rule {rule.name!r}: unknown column {c!r}")
        ok = rule.passes(table)
        bad = np.flatnonzero(~ok)
        out.append(RuleResult(rule.name, int(ok.sum()), int(bad.size), tuple(int(i) for i in bad[:5])))
    return out


# -- report ---------------------------------------------------------------------


@dataclass
class ValidationReport:
    ks: dict[str, dict[str, float]] = field(default_factory=dict)
    overlap: dict[str, float] = field(default_factory=dict)
    pca_ratios: list[float] = field(default_factory=list)
    mahalanobis_overlap: float | None = None
    plausibility: list[RuleResult] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["plausibility"] = [
            {"rule": r.rule, "passed": r.passed, "failed": r.failed, "examples": list(r.examples)}
            for r in self.plausibility
        ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"{'column':<22}{'KS D':>10}{'p':>10}{'overlap':>10}"]
        for c, r in self.ks.items():
            lines.append(f"{c:<22}{r['D']:>10.4f}{r['p']:>10.4f}{self.overlap.get(c, float('nan')):>10.4f}")
        if self.pca_ratios:
            lines.append("PCA ratios: " + ", ".join(f"{r:.4f}" for r in self.pca_ratios))
        if self.mahalanobis_overlap is not None:
            lines.append(f"Mahalanobis overlap: {self.mahalanobis_overlap:.4f}")
        for r in self.plausibility:
            lines.append(f"rule {r.rule}: {r.passed} pass, {r.failed} fail {list(r.examples)}")
        return "\n".join(lines)


def compare_tables(
    real: Table,
    synth: Table,
    columns: Sequence[str] | None = None,
    bins: int = 20,
    n_pc: int = 2,
    coverage: float = 0.997,
    rules: Sequence[PlausibilityRule] = (),
) -> ValidationReport:
    """Full report over the numeric columns shared by both tables."""
    if columns is None:
        columns = [c for c in real.columns if c in synth and real.dtype(c) in NUMERIC and synth.dtype(c) in NUMERIC]
    report = ValidationReport()
    for c in columns:
        d, p = ks_two_sample(real[c], synth[c])
        report.ks[c] = {"D": d, "p": p}
        report.overlap[c] = overlap_coefficient(real[c], synth[c], bins)
    varying = [c for c in columns if np.std(real[c]) > 0]
    if len(varying) >= 2 and real.n_rows > len(varying):
        k = min(n_pc, len(varying))
        report.pca_ratios = [float(r) for r in pca_fit(real, varying, k).ratios]
        report.mahalanobis_overlap = mahalanobis_overlap(real, synth, varying, k, coverage)
    if rules:
        report.plausibility = check_plausibility(synth, rules)
    return report
