"""Site-specific NPK rate search.

The objective scores a candidate ``(n, p, k)`` against a yield predictor:

    score = w_yield*dY + w_nue*NUE - w_env*ENV - M*violation

where ``dY`` is predicted gain over the unfertilised field, ``NUE`` is gain
per kg of nutrient, ``ENV`` sums squared excess over per-nutrient
sensitivity thresholds, and ``violation`` is the total-cap overshoot plus any
out-of-bounds excess. Both solvers maximise it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidSpecError, LengthMismatchError, ModelFailureError, ZeroVarianceError
from .generate import RATE_COLS
from .rng import Rng
from .table import Table

YieldFn = Callable[[Mapping[str, float], np.ndarray], float]


@dataclass(frozen=True)
class NpkRates:
    n: float
    p: float
    k: float

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.p, self.k], dtype=float)

    @property
    def total(self) -> float:
        return self.n + self.p + self.k


@dataclass(frozen=True)
class ObjectiveSpec:
    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)  # yield, nue, env
    bounds: tuple[tuple[float, float], ...] = ((0.0, 200.0), (0.0, 100.0), (0.0, 120.0))
    total_cap: float | None = None
    thresholds: tuple[float, float, float] = (math.inf, math.inf, math.inf)
    penalty: float = 1000.0

    def __post_init__(self):
        if len(self.weights) != 3 or any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise InvalidSpecError("weights must be three non-negative values, at least one positive")
        if len(self.bounds) != 3 or any(lo > hi for lo, hi in self.bounds):
            raise InvalidSpecError("bounds must be three (lo, hi) pairs with lo <= hi")
        if not self.penalty > 0:
            raise InvalidSpecError("penalty coefficient must be > 0")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    def scaled(self, c: float) -> "ObjectiveSpec":
        """Same spec with every weight and the penalty multiplied by ``c``."""
        return ObjectiveSpec(tuple(w * c for w in self.weights), self.bounds, self.total_cap,
                             self.thresholds, self.penalty * c)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ObjectiveSpec":
        kw: dict[str, Any] = {}
        if "weights" in doc:
            w = doc["weights"]
            kw["weights"] = (tuple(w) if isinstance(w, (list, tuple))
                             else (w.get("yield", 0.0), w.get("nue", 0.0), w.get("env", 0.0)))
        if "bounds" in doc:
            kw["bounds"] = tuple(tuple(b) for b in doc["bounds"])
        if "total_cap" in doc:
            kw["total_cap"] = doc["total_cap"]
        if "thresholds" in doc:
            kw["thresholds"] = tuple(doc["thresholds"])
        if "penalty" in doc:
            kw["penalty"] = doc["penalty"]
        return cls(**kw)


@dataclass(frozen=True)
class SAConfig:
    T0: float = 50.0
    alpha: float = 0.995
    iters: int = 2000
    step_sigma: float = 8.0

    def validate(self) -> None:
        if not self.T0 > 0:
            raise InvalidConfigError("SA T0 must be > 0")
        if not 0 < self.alpha < 1:
            raise InvalidConfigError("SA alpha must lie in (0, 1)")
        if self.iters < 1:
            raise InvalidConfigError("SA iters must be >= 1")
        if self.step_sigma < 0:
            raise InvalidConfigError("SA step_sigma must be >= 0")


@dataclass(frozen=True)
class PSOConfig:
    particles: int = 20
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    iters: int = 100

    def validate(self) -> None:
        if self.particles < 2:
            raise InvalidConfigError("PSO needs at least 2 particles")
        if self.iters < 1:
            raise InvalidConfigError("PSO iters must be >= 1")


@dataclass(frozen=True)
class SolverConfig:
    sa: SAConfig = field(default_factory=SAConfig)
    pso: PSOConfig = field(default_factory=PSOConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], seed: int | None = None) -> "SolverConfig":
        return cls(SAConfig(**doc.get("sa", {})), PSOConfig(**doc.get("pso", {})),
                   int(seed if seed is not None else doc.get("seed", 0)))


@dataclass(frozen=True)
class ObjectiveTerms:
    score: float
    gain: float
    nue: float
    env: float
    violation: float


def objective_terms(rates, field: Mapping[str, float], model: YieldFn, spec: ObjectiveSpec) -> ObjectiveTerms:
    x = rates.as_array() if isinstance(rates, NpkRates) else np.asarray(rates, dtype=float)
    try:
        y1 = float(model(field, x))
        y0 = float(model(field, np.zeros(3)))
    except Exception as exc:
        raise ModelFailureError(f"yield model failed: {exc}") from exc
    if not (math.isfinite(y1) and math.isfinite(y0)):
        raise ModelFailureError("yield model returned a non-finite prediction")
    gain = y1 - y0
    total = float(x.sum())
    nue = gain / total if total > 0 else 0.0
    env = float(np.sum(np.maximum(0.0, x - np.asarray(spec.thresholds, dtype=float)) ** 2))
    violation = float(np.sum(np.maximum(0.0, spec.lower - x)) + np.sum(np.maximum(0.0, x - spec.upper)))
    if spec.total_cap is not None:
        violation += max(0.0, total - spec.total_cap)
    w_y, w_n, w_e = spec.weights
    score = w_y * gain + w_n * nue - w_e * env - spec.penalty * violation
    return ObjectiveTerms(score, gain, nue, env, violation)


def objective(rates, field: Mapping[str, float], model: YieldFn, spec: ObjectiveSpec) -> float:
    return objective_terms(rates, field, model, spec).score


# -- solvers ------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverResult:
    best: np.ndarray
    score: float
    trace: np.ndarray

    def __iter__(self):
        return iter((self.best, self.score, self.trace))


def _bounds_arrays(bounds) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(lo > hi):
        raise InvalidConfigError("bounds must satisfy lo <= hi")
    return lo, hi


def simulated_annealing(f: Callable[[np.ndarray], float], bounds, config: SAConfig, rng: Rng) -> SolverResult:
    """Maximise ``f`` inside a box.

    Starts at the box midpoint. Each iteration draws a normal step per
    coordinate, clips to the box, then draws one uniform for the Metropolis
    test ``u < exp(delta / T)`` (drawn even when the move improves, so the
    random stream does not depend on the scores). ``T`` shrinks by
    ``alpha`` every iteration. The trace holds the best score after each
    iteration.
    """
    config.validate()
    lo, hi = _bounds_arrays(bounds)
    x = 0.5 * (lo + hi)
    fx = float(f(x))
    best, fbest = x.copy(), fx
    T = config.T0
    d = lo.size
    trace = np.empty(config.iters)
    for it in range(config.iters):
        step = np.array([rng.normal(0.0, config.step_sigma) for _ in range(d)])
        cand = np.clip(x + step, lo, hi)
        fc = float(f(cand))
        u = rng.random()
        delta = fc - fx
        if delta >= 0 or u < math.exp(delta / T):
            x, fx = cand, fc
            if fx > fbest:
                best, fbest = x.copy(), fx
        T *= config.alpha
        trace[it] = fbest
    return SolverResult(best, fbest, trace)


def particle_swarm(f: Callable[[np.ndarray], float], bounds, config: PSOConfig, rng: Rng) -> SolverResult:
    """Global-best particle swarm maximising ``f`` inside a box.

    Each particle draws from its own child stream, so evaluations could run
    in any order without changing the result. Velocities start at zero; a
    coordinate clipped to the box has its velocity zeroed.
    """
    config.validate()
    lo, hi = _bounds_arrays(bounds)
    d = lo.size
    streams = [rng.split(f"particle:{i}") for i in range(config.particles)]
    pos = np.array([[s.uniform(lo[j], hi[j]) for j in range(d)] for s in streams])
    vel = np.zeros_like(pos)
    fit = np.array([float(f(p)) for p in pos])
    pbest, pfit = pos.copy(), fit.copy()
    g = int(np.argmax(pfit))
    gbest, gfit = pbest[g].copy(), float(pfit[g])
    trace = np.empty(config.iters)
    for it in range(config.iters):
        for i, s in enumerate(streams):
            r1 = np.array([s.random() for _ in range(d)])
            r2 = np.array([s.random() for _ in range(d)])
            vel[i] = (config.inertia * vel[i] + config.c1 * r1 * (pbest[i] - pos[i])
                      + config.c2 * r2 * (gbest - pos[i]))
            moved = pos[i] + vel[i]
            clipped = (moved < lo) | (moved > hi)
            pos[i] = np.clip(moved, lo, hi)
            vel[i][clipped] = 0.0
        fit = np.array([float(f(p)) for p in pos])
        better = fit > pfit
        pbest[better] = pos[better]
        pfit[better] = fit[better]
        g = int(np.argmax(pfit))
        if pfit[g] > gfit:
            gbest, gfit = pbest[g].copy(), float(pfit[g])
        trace[it] = gfit
    return SolverResult(gbest, gfit, trace)


def grid_search(f: Callable[[np.ndarray], float], bounds, step: float = 1.0) -> SolverResult:
    """Exhaustive search on a regular grid; the reference the solvers are tested against."""
    lo, hi = _bounds_arrays(bounds)
    axes = [np.arange(a, b + step * 0.5, step) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    best, fbest = None, -math.inf
    for point in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T:
        v = float(f(point))
        if v > fbest:
            best, fbest = point.copy(), v
    return SolverResult(best, fbest, np.array([fbest]))


# -- per-field recommendation -----------------------------------------------------------


def surrogate_predictor(model, soil_cols: Sequence[str], rate_cols: Sequence[str] = RATE_COLS) -> YieldFn:
    """Adapt a fitted regressor into ``(field, rates) -> yield``.

    ``model.feature_names`` decides the column order of the assembled row.
    """
    names = list(model.feature_names) if getattr(model, "feature_names", None) else [*soil_cols, *rate_cols]
    rate_pos = {c: i for i, c in enumerate(rate_cols)}

    def predict(field: Mapping[str, float], rates: np.ndarray) -> float:
        row = [rates[rate_pos[c]] if c in rate_pos else field[c] for c in names]
        return float(model.predict(np.array([row], dtype=float))[0])

    return predict


def recommend_npk(
    trials: Table,
    model: YieldFn,
    spec: ObjectiveSpec,
    config: SolverConfig,
    soil_cols: Sequence[str],
    id_col: str = "field_id",
) -> Table:
    """Run both solvers per field and keep the better result.

    Output columns: ``field_id, rec_n, rec_p, rec_k, predicted_gain, nue,
    env_score, solver_used``. Ties go to simulated annealing.
    """
    root = Rng(config.seed)
    rows = []
    for i in range(trials.n_rows):
        field = {c: float(trials[c][i]) for c in soil_cols}
        fid = trials[id_col][i] if id_col in trials else i

        def f(x, field=field):
            return objective(x, field, model, spec)

        sa = simulated_annealing(f, spec.bounds, config.sa, root.split(f"sa:{fid}"))
        pso = particle_swarm(f, spec.bounds, config.pso, root.split(f"pso:{fid}"))
        winner, name = (sa, "sa") if sa.score >= pso.score else (pso, "pso")
        terms = objective_terms(winner.best, field, model, spec)
        rows.append({
            id_col: fid,
            "rec_n": winner.best[0],
            "rec_p": winner.best[1],
            "rec_k": winner.best[2],
            "predicted_gain": terms.gain,
            "nue": terms.nue,
            "env_score": terms.env,
            "solver_used": name,
        })
    dtypes = {"rec_n": "float64", "rec_p": "float64", "rec_k": "float64", "predicted_gain": "float64",
              "nue": "float64", "env_score": "float64", "solver_used": "category"}
    if id_col in trials:
        dtypes[id_col] = trials.dtype(id_col)
    else:
        dtypes[id_col] = "int64"
    units = {"rec_n": "kg/ha", "rec_p": "kg/ha", "rec_k": "kg/ha", "predicted_gain": "kg/ha"}
    if not rows:
        return Table({c: [] for c in dtypes}, dtypes, units)
    return Table.from_rows(rows, dtypes, units=units)


def explained_variability(recommended, observed) -> float:
    """``max(0, 1 - Var(recommended - observed) / Var(observed)) * 100``.

    Offset-invariant: a constant shift leaves the residual variance unchanged.
    """
    r = np.asarray(recommended, dtype=float)
    o = np.asarray(observed, dtype=float)
    if r.shape != o.shape:
        raise LengthMismatchError(f"lengths differ: {r.size} vs {o.size}")
    if o.size < 2:
        raise LengthMismatchError("need at least 2 observations")
    vo = float(np.var(o))
    if not vo > 0:
        raise ZeroVarianceError("observed series has zero variance")
    return max(0.0, 1.0 - float(np.var(r - o)) / vo) * 100.0
