"""Synthetic data from scratch: columns, daily weather, soil grids, field trials."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InvalidSpecError, NotPositiveSemiDefiniteError
from .rng import Rng
from .table import Table

SOIL_COLS = ("ph", "organic_matter_pct", "n_mgkg", "p_mgkg", "k_mgkg")
RATE_COLS = ("n_rate", "p_rate", "k_rate")
YIELD_COL = "yield_kgha"

SOIL_UNITS = ("pH", "%", "mg/kg", "mg/kg", "mg/kg")
# physical clamps for the soil vector, in SOIL_COLS order
SOIL_BOUNDS = ((0.0, 14.0), (0.0, 100.0), (0.0, math.inf), (0.0, math.inf), (0.0, math.inf))

WEATHER_COLS = ("date", "tmin", "tmax", "rain_mm")
WEATHER_UNITS = {"tmin": "degC", "tmax": "degC", "rain_mm": "mm"}


# -- per-column distributions -------------------------------------------------

_FAMILY_ARITY = {"normal": 2, "lognormal": 2, "uniform": 2, "beta": 4}


@dataclass(frozen=True)
class DistSpec:
    """A sampling distribution for one float column.

    ``params`` by family: ``normal (mu, sigma)``, ``lognormal (mu_log,
    sigma_log)``, ``uniform (a, b)``, ``beta (alpha, beta, lo, hi)``.
    ``clamp`` is applied after sampling.
    """

    family: str
    params: tuple[float, ...]
    clamp: tuple[float, float] | None = None

    def validate(self) -> None:
        if self.family not in _FAMILY_ARITY:
            raise InvalidSpecError(f"unknown distribution family {self.family!r}")
        if len(self.params) != _FAMILY_ARITY[self.family]:
            raise InvalidSpecError(
                f"{self.family} takes {_FAMILY_ARITY[self.family]} parameters, got {len(self.params)}"
            )
        p = self.params
        if self.family in ("normal", "lognormal") and not p[1] > 0:
            raise InvalidSpecError(f"{self.family}: sigma must be > 0")
        if self.family == "uniform" and not p[0] < p[1]:
            raise InvalidSpecError("uniform: need a < b")
        if self.family == "beta":
            if not (p[0] > 0 and p[1] > 0):
                raise InvalidSpecError("beta: alpha and beta must be > 0")
            if not p[2] < p[3]:
                raise InvalidSpecError("beta: need lo < hi")
        if self.clamp is not None and not self.clamp[0] < self.clamp[1]:
            raise InvalidSpecError("clamp: need lo < hi")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DistSpec":
        fam = doc.get("family")
        keys = {
            "normal": ("mu", "sigma"),
            "lognormal": ("mu_log", "sigma_log"),
            "uniform": ("a", "b"),
            "beta": ("alpha", "beta", "lo", "hi"),
        }.get(fam)
        if keys is None:
            raise InvalidSpecError(f"unknown distribution family {fam!r}")
        try:
            params = tuple(float(doc[k]) for k in keys)
        except KeyError as exc:
            raise InvalidSpecError(f"{fam}: missing parameter {exc}") from None
        clamp = tuple(doc["clamp"]) if doc.get("clamp") is not None else None
        return cls(fam, params, clamp)


def gen_column(spec: DistSpec, n: int, rng: Rng) -> np.ndarray:
    """``n`` i.i.d. draws from ``spec``, clamped last."""
    spec.validate()
    if n < 0:
        raise InvalidSpecError("n must be >= 0")
    p = spec.params
    if spec.family == "normal":
        out = rng.normal(p[0], p[1], size=n)
    elif spec.family == "lognormal":
        out = np.exp(rng.normal(p[0], p[1], size=n))
    elif spec.family == "uniform":
        out = rng.uniform(p[0], p[1], size=n)
    else:
        alpha, beta, lo, hi = p
        x = rng.gamma(alpha, 1.0, size=n)
        y = rng.gamma(beta, 1.0, size=n)
        out = lo + (hi - lo) * (x / (x + y)) if n else np.empty(0)
    if spec.clamp is not None:
        out = np.clip(out, spec.clamp[0], spec.clamp[1])
    return np.asarray(out, dtype=np.float64)


def gen_table(specs: Mapping[str, DistSpec], n: int, rng: Rng) -> Table:
    """Independent columns, each drawn from its own child stream of ``rng``."""
    return Table({name: gen_column(spec, n, rng.split(f"column:{name}")) for name, spec in specs.items()},
                 dtypes={name: "float64" for name in specs})


# -- weather ------------------------------------------------------------------


@dataclass(frozen=True)
class WeatherParams:
    """Richardson-type daily weather generator parameters.

    Daily mean temperature is ``t_mean + t_amp * sin(2*pi*(doy - t_phase)/365)``
    plus normal noise with sd ``t_sigma``. tmax and tmin sit
    ``diurnal_range/2`` either side of it, each with independent normal noise
    of sd ``t_sigma/2``, and are swapped if the noise inverts them.
    Occurrence is a two-state Markov chain; wet-day depth is
    gamma(``rain_shape``, ``rain_scale``) mm.
    """

    t_mean: float = 22.0
    t_amp: float = 6.0
    t_phase: float = 105.0
    t_sigma: float = 1.5
    diurnal_range: float = 11.0
    p_wet_given_wet: float = 0.6
    p_wet_given_dry: float = 0.2
    rain_shape: float = 0.8
    rain_scale: float = 9.0

    def validate(self) -> None:
        if self.t_amp < 0 or self.t_sigma < 0:
            raise InvalidSpecError("t_amp and t_sigma must be >= 0")
        if not self.diurnal_range > 0:
            raise InvalidSpecError("diurnal_range must be > 0")
        for name in ("p_wet_given_wet", "p_wet_given_dry"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpecError(f"{name} must lie in [0, 1]")
        if not (self.rain_shape > 0 and self.rain_scale > 0):
            raise InvalidSpecError("rain_shape and rain_scale must be > 0")

    @property
    def stationary_wet(self) -> float:
        """Long-run wet-day fraction of the occurrence chain."""
        denom = 1.0 - self.p_wet_given_wet + self.p_wet_given_dry
        return 0.0 if denom == 0 else self.p_wet_given_dry / denom


def _as_date(d: dt.date | str | np.datetime64) -> dt.date:
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    if isinstance(d, np.datetime64):
        return dt.date.fromisoformat(str(d.astype("datetime64[D]")))
    return dt.date.fromisoformat(str(d))


def gen_weather(
    params: WeatherParams,
    start: dt.date | str,
    n_days: int,
    rng: Rng,
    prev_wet: bool | None = None,
) -> Table:
    """Daily ``date, tmin, tmax, rain_mm`` series.

    ``prev_wet`` is the occurrence state of the day before ``start``; when
    omitted it is drawn from the chain's stationary distribution.
    """
    params.validate()
    if n_days < 1:
        raise InvalidSpecError("n_days must be >= 1")
    start = _as_date(start)
    occ = rng.split("occurrence")
    amt = rng.split("amount")
    tmp = rng.split("temperature")

    if prev_wet is None:
        prev_wet = occ.random() < params.stationary_wet
    wet = prev_wet
    rain = np.zeros(n_days)
    for d in range(n_days):
        p = params.p_wet_given_wet if wet else params.p_wet_given_dry
        wet = occ.random() < p
        if wet:
            rain[d] = amt.gamma(params.rain_shape, params.rain_scale)

    dates = np.arange(np.datetime64(start.isoformat(), "D"), np.datetime64(start.isoformat(), "D") + n_days)
    doy = np.array([(start + dt.timedelta(days=i)).timetuple().tm_yday for i in range(n_days)], dtype=float)
    mean = params.t_mean + params.t_amp * np.sin(2.0 * np.pi * (doy - params.t_phase) / 365.0)
    mean = mean + tmp.normal(0.0, params.t_sigma, size=n_days)
    half = params.diurnal_range / 2.0
    hi = mean + half + tmp.normal(0.0, params.t_sigma / 2.0, size=n_days)
    lo = mean - half + tmp.normal(0.0, params.t_sigma / 2.0, size=n_days)
    tmin = np.minimum(lo, hi)
    tmax = np.maximum(lo, hi)
    return Table({"date": dates, "tmin": tmin, "tmax": tmax, "rain_mm": rain},
                 dtypes={"date": "date", "tmin": "float64", "tmax": "float64", "rain_mm": "float64"},
                 units=WEATHER_UNITS)


# -- soil grids ---------------------------------------------------------------


@dataclass(frozen=True)
class SoilGridParams:
    width: int = 20
    height: int = 20
    base: float = 6.0
    gradient: tuple[float, float] = (0.05, -0.02)
    noise_sigma: float = 0.1
    clamp: tuple[float, float] = (0.0, 14.0)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidSpecError("grid width and height must be >= 1")
        if self.noise_sigma < 0:
            raise InvalidSpecError("noise_sigma must be >= 0")
        if not self.clamp[0] < self.clamp[1]:
            raise InvalidSpecError("clamp: need lo < hi")


def gen_soil_grid(params: SoilGridParams, rng: Rng) -> Table:
    """One row per cell in row-major order (``y`` outer, ``x`` inner)."""
    params.validate()
    ys, xs = np.divmod(np.arange(params.width * params.height), params.width)
    gx, gy = params.gradient
    noise = rng.normal(0.0, params.noise_sigma, size=xs.size)
    value = np.clip(params.base + gx * xs + gy * ys + noise, *params.clamp)
    return Table({"x": xs, "y": ys, "value": value},
                 dtypes={"x": "int64", "y": "int64", "value": "float64"})


# -- field trials -------------------------------------------------------------


@dataclass(frozen=True)
class YieldResponse:
    """Quadratic-concave yield response, kg/ha.

    ``yield = intercept + sum(linear[i]*x[i] - quadratic[i]*x[i]**2)
    + sum(soil[j]*s[j]) + sum_ij interaction[i][j]*x[i]*(s[j] - soil_center[j])
    + noise``, floored at 0, with ``x = (n, p, k)`` in kg/ha and ``s`` the
    soil vector. The interaction term is zero by default; it makes the
    per-field optimum depend on soil.
    """

    intercept: float = 0.0
    linear: tuple[float, float, float] = (0.0, 0.0, 0.0)
    quadratic: tuple[float, float, float] = (0.0, 0.0, 0.0)
    soil: tuple[float, ...] = (0.0,) * 5
    noise_sigma: float = 0.0
    interaction: tuple[tuple[float, ...], ...] | None = None
    soil_center: tuple[float, ...] = (0.0,) * 5

    def validate(self) -> None:
        if any(g < 0 for g in self.quadratic):
            raise InvalidSpecError("quadratic coefficients must be >= 0 (concave response)")
        if self.noise_sigma < 0:
            raise InvalidSpecError("noise_sigma must be >= 0")
        if len(self.soil) != len(SOIL_COLS) or len(self.soil_center) != len(SOIL_COLS):
            raise InvalidSpecError("soil terms need one coefficient per soil property")
        if self.interaction is not None and (
            len(self.interaction) != 3 or any(len(r) != len(SOIL_COLS) for r in self.interaction)
        ):
            raise InvalidSpecError("interaction must be 3 x 5")

    def effective_linear(self, soil: np.ndarray) -> np.ndarray:
        """Per-row linear coefficients after soil interaction, shape ``(n, 3)``."""
        soil = np.atleast_2d(soil)
        lin = np.tile(np.asarray(self.linear, dtype=float), (soil.shape[0], 1))
        if self.interaction is not None:
            lin = lin + (soil - np.asarray(self.soil_center)) @ np.asarray(self.interaction, dtype=float).T
        return lin

    def mean_yield(self, soil: np.ndarray, rates: np.ndarray) -> np.ndarray:
        """Noise-free response before flooring."""
        soil = np.atleast_2d(np.asarray(soil, dtype=float))
        rates = np.atleast_2d(np.asarray(rates, dtype=float))
        lin = self.effective_linear(soil)
        quad = np.asarray(self.quadratic, dtype=float)
        return (self.intercept + np.sum(lin * rates - quad * rates ** 2, axis=1)
                + soil @ np.asarray(self.soil, dtype=float))

    def optimum(self, soil: np.ndarray, bounds: Sequence[tuple[float, float]] | None = None) -> np.ndarray:
        """Yield-maximizing rates (parabola vertex), clipped to ``bounds``."""
        lin = self.effective_linear(soil)
        quad = np.asarray(self.quadratic, dtype=float)
        with np.errstate(divide="ignore"):
            vertex = np.where(quad > 0, lin / (2.0 * np.where(quad > 0, quad, 1.0)), np.inf)
        if bounds is not None:
            lo = np.array([b[0] for b in bounds])
            hi = np.array([b[1] for b in bounds])
            vertex = np.clip(vertex, lo, hi)
        return vertex


@dataclass(frozen=True)
class TrialGenParams:
    n: int = 1000
    soil_means: tuple[float, ...] = (6.4, 2.2, 25.0, 15.0, 160.0)
    soil_cov: tuple[tuple[float, ...], ...] = (
        (0.36, 0.06, 0.6, 0.5, 4.0),
        (0.06, 0.36, 1.2, 0.6, 4.0),
        (0.6, 1.2, 64.0, 8.0, 30.0),
        (0.5, 0.6, 8.0, 36.0, 20.0),
        (4.0, 4.0, 30.0, 20.0, 1600.0),
    )
    rate_ranges: tuple[tuple[float, float], ...] = ((0.0, 200.0), (0.0, 100.0), (0.0, 120.0))
    response: YieldResponse = field(default_factory=lambda: YieldResponse(
        intercept=600.0,
        linear=(22.0, 18.0, 9.0),
        quadratic=(0.06, 0.09, 0.045),
        soil=(120.0, 250.0, 12.0, 15.0, 2.0),
        noise_sigma=250.0,
        interaction=((0.0, 0.0, -0.4, 0.0, 0.0),
                     (0.0, 0.0, 0.0, -0.5, 0.0),
                     (0.0, 0.0, 0.0, 0.0, -0.03)),
        soil_center=(6.4, 2.2, 25.0, 15.0, 160.0),
    ))
    seasons: tuple[tuple[str, float], ...] = (("2019", 0.15), ("2020", 0.15), ("2021", 0.70))
    soil_bounds: tuple[tuple[float, float], ...] = SOIL_BOUNDS
    season_effects: Mapping[str, float] | None = None
    exact_seasons: bool = False

    def validate(self) -> None:
        if self.n < 0:
            raise InvalidSpecError("n must be >= 0")
        if len(self.soil_means) != len(SOIL_COLS):
            raise InvalidSpecError("soil_means needs 5 entries")
        cov = np.asarray(self.soil_cov, dtype=float)
        if cov.shape != (5, 5):
            raise InvalidSpecError("soil_cov must be 5 x 5")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise InvalidSpecError("soil_cov must be symmetric")
        if len(self.rate_ranges) != 3 or any(lo > hi or lo < 0 for lo, hi in self.rate_ranges):
            raise InvalidSpecError("rate_ranges must be three (lo, hi) pairs with 0 <= lo <= hi")
        self.response.validate()
        if not self.seasons:
            raise InvalidSpecError("at least one season is required")
        w = np.array([s[1] for s in self.seasons], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidSpecError("season weights must be non-negative and sum to 1")


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Lower factor ``L`` with ``L @ L.T == cov``.

    Cholesky first; a singular but positive semi-definite matrix falls back
    to the symmetric eigendecomposition.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    tol = 1e-10 * max(1.0, float(np.abs(w).max()))
    if w.min() < -tol:
        raise NotPositiveSemiDefiniteError(
            f"covariance has negative eigenvalue {w.min():.3g}"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


def season_counts(n: int, weights: Sequence[float]) -> np.ndarray:
    """Largest-remainder allocation of ``n`` rows; ties go to the earlier season."""
    quota = n * np.asarray(weights, dtype=float)
    counts = np.floor(quota).astype(np.int64)
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    return counts


def gen_trials(params: TrialGenParams, rng: Rng) -> Table:
    """Joint soil, applied-rate, yield and season table.

    Columns: ``field_id, season, ph, organic_matter_pct, n_mgkg, p_mgkg,
    k_mgkg, n_rate, p_rate, k_rate, yield_kgha``. Seasons are drawn
    independently per row, or with ``exact_seasons`` allocated as exact
    counts (see :func:`season_counts`) in shuffled order.
    """
    params.validate()
    n = params.n
    L = psd_factor(np.asarray(params.soil_cov, dtype=float))
    z = rng.split("soil").normal(size=n * 5).reshape(n, 5)
    soil = np.asarray(params.soil_means, dtype=float) + z @ L.T
    lo = np.array([b[0] for b in params.soil_bounds])
    hi = np.array([b[1] for b in params.soil_bounds])
    soil = np.clip(soil, lo, hi)

    rate_rng = rng.split("rates")
    rates = np.empty((n, 3))
    for j, (a, b) in enumerate(params.rate_ranges):
        rates[:, j] = rate_rng.uniform(a, b, size=n)

    labels = [s[0] for s in params.seasons]
    weights = [s[1] for s in params.seasons]
    if params.exact_seasons:
        counts = season_counts(n, weights)
        season_idx = np.repeat(np.arange(len(labels)), counts)[rng.split("season").permutation(n)]
    else:
        season_idx = rng.split("season").categorical(weights, size=n)
    season = np.array([labels[i] for i in season_idx], dtype=object)

    resp = params.response
    y = resp.mean_yield(soil, rates) if n else np.empty(0)
    if params.season_effects:
        y = y + np.array([params.season_effects.get(s, 0.0) for s in season])
    y = y + rng.split("noise").normal(0.0, resp.noise_sigma, size=n)
    y = np.maximum(y, 0.0)

    data: dict[str, Any] = {"field_id": np.arange(n, dtype=np.int64), "season": season}
    for j, name in enumerate(SOIL_COLS):
        data[name] = soil[:, j]
    for j, name in enumerate(RATE_COLS):
        data[name] = rates[:, j]
    data[YIELD_COL] = y
    units = dict(zip(SOIL_COLS, SOIL_UNITS))
    units.update({c: "kg/ha" for c in RATE_COLS})
    units[YIELD_COL] = "kg/ha"
    dtypes = {"field_id": "int64", "season": "category"}
    dtypes.update({c: "float64" for c in (*SOIL_COLS, *RATE_COLS, YIELD_COL)})
    return Table(data, dtypes, units, {"season": sorted(set(labels))})
