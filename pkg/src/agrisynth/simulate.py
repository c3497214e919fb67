"""Day-by-day growing-season simulation and real/synthetic weather blending.

The crop model is deliberately small: growing degree days drive five
stages, a single-bucket soil water balance sets daily stress, and yield is
potential yield scaled by stage-weighted mean water availability.
Fertiliser actions are recorded but do not feed back into yield.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ActionOutOfRangeError, EmptyWeatherError, InvalidSpecError, UnknownColumnError
from .generate import WEATHER_COLS, WeatherParams, _as_date, gen_weather
from .rng import Rng
from .table import Table, concat

STAGES = ("sown", "emergence", "vegetative", "flowering", "maturity")


@dataclass(frozen=True)
class CropParams:
    """Crop settings.

    ``stage_gdd`` holds the cumulative GDD at which emergence, vegetative,
    flowering and maturity begin. ``stress_weight`` has one entry per
    stage in :data:`STAGES`, starting with the pre-emergence ``sown`` stage.
    """

    t_base: float = 10.0
    stage_gdd: tuple[float, float, float, float] = (100.0, 500.0, 1100.0, 1700.0)
    potential_yield: float = 6000.0
    water_capacity: float = 120.0
    daily_et: float = 4.5
    stress_weight: tuple[float, ...] = (0.1, 0.4, 0.8, 1.0, 0.3)
    initial_water: float | None = None

    def validate(self) -> None:
        if len(self.stage_gdd) != 4 or any(b <= a for a, b in zip(self.stage_gdd, self.stage_gdd[1:])):
            raise InvalidSpecError("stage_gdd must be four strictly increasing thresholds")
        if not self.water_capacity > 0:
            raise InvalidSpecError("water_capacity must be > 0")
        if self.daily_et < 0 or self.potential_yield < 0:
            raise InvalidSpecError("daily_et and potential_yield must be >= 0")
        if len(self.stress_weight) != len(STAGES) or any(not 0 <= w <= 1 for w in self.stress_weight):
            raise InvalidSpecError(f"stress_weight needs {len(STAGES)} values in [0, 1]")
        if self.initial_water is not None and not 0 <= self.initial_water <= self.water_capacity:
            raise InvalidSpecError("initial_water must lie in [0, water_capacity]")


@dataclass(frozen=True)
class ManagementAction:
    """``kind`` is ``"fertilize"`` (with ``n, p, k`` kg/ha) or ``"irrigate"`` (``mm``)."""

    day: int
    kind: str
    mm: float = 0.0
    n: float = 0.0
    p: float = 0.0
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fertilize", "irrigate"):
            raise InvalidSpecError(f"unknown action kind {self.kind!r}")
        if min(self.mm, self.n, self.p, self.k) < 0:
            raise InvalidSpecError("action amounts must be >= 0")

    @classmethod
    def fertilize(cls, day: int, n: float = 0.0, p: float = 0.0, k: float = 0.0) -> "ManagementAction":
        return cls(day, "fertilize", n=n, p=p, k=k)

    @classmethod
    def irrigate(cls, day: int, mm: float) -> "ManagementAction":
        return cls(day, "irrigate", mm=mm)


@dataclass(frozen=True)
class NutrientEntry:
    day: int
    date: dt.date
    n: float
    p: float
    k: float


@dataclass(frozen=True)
class SeasonLog:
    daily: Table
    final_yield: float
    nutrients: tuple[NutrientEntry, ...] = field(default_factory=tuple)

    @property
    def nutrient_totals(self) -> tuple[float, float, float]:
        return (sum(e.n for e in self.nutrients), sum(e.p for e in self.nutrients),
                sum(e.k for e in self.nutrients))


def _require_weather(weather: Table) -> None:
    for c in WEATHER_COLS:
        if c not in weather:
            raise UnknownColumnError(f"weather table lacks column {c!r}")
    if weather.n_rows == 0:
        raise EmptyWeatherError("weather series is empty")


def run_season(
    weather: Table,
    crop: CropParams,
    actions: Sequence[ManagementAction] = (),
    irrigation_default: float = 0.0,
) -> SeasonLog:
    """Simulate one season over every day of ``weather``.

    Per day ``d``: ``GDD = max(0, (tmax + tmin)/2 - t_base)``; the stage is
    the number of thresholds the running GDD total has reached; stress is
    the start-of-day water divided by capacity; the bucket then updates to
    ``clip(water + rain + irrigation - daily_et, 0, capacity)``.
    ``final_yield = potential * sum(stress*w) / sum(w)`` with ``w`` the
    stage weight of each day (potential yield if every weight is zero).
    """
    crop.validate()
    _require_weather(weather)
    n = weather.n_rows
    irrigation = np.full(n, float(irrigation_default))
    fert = []
    for a in sorted(actions, key=lambda a: a.day):
        if not 0 <= a.day < n:
            raise ActionOutOfRangeError(f"action on day {a.day} outside season of {n} days")
        if a.kind == "irrigate":
            irrigation[a.day] += a.mm
        else:
            fert.append(a)

    tmin = weather["tmin"]
    tmax = weather["tmax"]
    rain = weather["rain_mm"]
    gdd = np.maximum(0.0, (tmax + tmin) / 2.0 - crop.t_base)
    gdd_cum = np.cumsum(gdd)
    stage = np.searchsorted(np.asarray(crop.stage_gdd), gdd_cum, side="right")

    cap = crop.water_capacity
    water = np.empty(n)
    w = cap if crop.initial_water is None else crop.initial_water
    for d in range(n):
        water[d] = w
        w = min(cap, max(0.0, w + rain[d] + irrigation[d] - crop.daily_et))
    stress = water / cap

    weights = np.asarray(crop.stress_weight, dtype=float)[stage]
    denom = weights.sum()
    ratio = float((stress * weights).sum() / denom) if denom > 0 else 1.0
    final_yield = crop.potential_yield * min(1.0, max(0.0, ratio))

    dates = weather["date"]
    daily = Table(
        {
            "date": dates,
            "gdd": gdd,
            "gdd_cum": gdd_cum,
            "stage": stage.astype(np.int64),
            "stage_name": [STAGES[s] for s in stage],
            "rain_mm": rain,
            "irrigation_mm": irrigation,
            "soil_water": water,
            "stress": stress,
        },
        dtypes={"date": "date", "stage": "int64", "stage_name": "category"},
        units={"gdd": "degC day", "gdd_cum": "degC day", "rain_mm": "mm", "irrigation_mm": "mm",
               "soil_water": "mm"},
        categories={"stage_name": STAGES},
    )
    ledger = tuple(
        NutrientEntry(a.day, _as_date(dates[a.day]), a.n, a.p, a.k) for a in fert
    )
    return SeasonLog(daily, final_yield, ledger)


def blend_weather(real: Table, params: WeatherParams, extend_days: int, rng: Rng) -> Table:
    """Append ``extend_days`` generated days after the last real day.

    The occurrence chain starts from whether the last real day had rain.
    Only the four weather columns are kept.
    """
    _require_weather(real)
    real = real.select(list(WEATHER_COLS))
    if extend_days <= 0:
        return real
    last = _as_date(real["date"][-1])
    prev_wet = bool(real["rain_mm"][-1] > 0)
    synth = gen_weather(params, last + dt.timedelta(days=1), extend_days, rng, prev_wet=prev_wet)
    return concat([real, synth])
