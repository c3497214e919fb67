"""NASA POWER daily point client with an on-disk cache and a fixture mode.

Live requests ask for ``T2M_MAX``, ``T2M_MIN`` and ``PRECTOTCORR`` from
the daily point endpoint. Responses are cached as
``<cache_dir>/<lat>_<lon>_<start>_<end>.json``; fixture mode reads files
with the same name and shape from a local directory and never touches the
network.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np
import requests

from .errors import (
    ApiSchemaChangeError,
    InvalidCoordsError,
    InvalidSpecError,
    MissingWeatherDataError,
    NetworkFailureError,
)
from .generate import WEATHER_UNITS, _as_date
from .table import Table

log = logging.getLogger(__name__)

POWER_URL = "https://power.larc.nasa.gov/api/temporal/daily/point"
PARAMETERS = ("T2M_MAX", "T2M_MIN", "PRECTOTCORR")
FIXTURE_DIR = Path(__file__).parent / "data" / "power"


def cache_name(lat: float, lon: float, start: dt.date, end: dt.date) -> str:
    return f"{lat:.4f}_{lon:.4f}_{start:%Y%m%d}_{end:%Y%m%d}.json"


def _check_request(lat: float, lon: float, start, end) -> tuple[dt.date, dt.date]:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise InvalidCoordsError(f"invalid coordinates ({lat}, {lon})")
    start, end = _as_date(start), _as_date(end)
    if start > end:
        raise InvalidSpecError(f"start {start} is after end {end}")
    return start, end


def parse_power_json(doc: Any, start: dt.date | None = None, end: dt.date | None = None) -> Table:
    """Turn a POWER daily JSON document into a ``date, tmin, tmax, rain_mm`` table.

    tmin and tmax are reordered per day when the source has them inverted.
    Fill values and calendar gaps raise :class:`MissingWeatherDataError`.
    """
    try:
        params = doc["properties"]["parameter"]
        series = {p: params[p] for p in PARAMETERS}
    except (KeyError, TypeError) as exc:
        raise ApiSchemaChangeError(f"POWER response lacks expected field {exc}") from None
    fill = doc.get("header", {}).get("fill_value", -999.0) if isinstance(doc, dict) else -999.0
    keys = sorted(series["T2M_MAX"])
    if any(sorted(series[p]) != keys for p in PARAMETERS):
        raise ApiSchemaChangeError("POWER parameters cover different dates")
    try:
        dates = [dt.datetime.strptime(k, "%Y%m%d").date() for k in keys]
    except ValueError as exc:
        raise ApiSchemaChangeError(f"unexpected date key: {exc}") from None
    if start is not None or end is not None:
        lo = start or dates[0]
        hi = end or dates[-1]
        keep = [i for i, d in enumerate(dates) if lo <= d <= hi]
        keys = [keys[i] for i in keep]
        dates = [dates[i] for i in keep]
        expected = (hi - lo).days + 1
        if len(dates) != expected:
            raise MissingWeatherDataError(f"POWER data covers {len(dates)} of {expected} requested days")
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            raise MissingWeatherDataError(f"gap in POWER series between {a} and {b}")
    vals = {}
    for p in PARAMETERS:
        try:
            v = np.array([float(series[p][k]) for k in keys])
        except (TypeError, ValueError) as exc:
            raise ApiSchemaChangeError(f"non-numeric {p} value: {exc}") from None
        bad = np.flatnonzero(v == fill)
        if bad.size:
            raise MissingWeatherDataError(f"{p} has fill values on {[keys[i] for i in bad[:5]]}")
        vals[p] = v
    tmax, tmin = vals["T2M_MAX"], vals["T2M_MIN"]
    return Table(
        {"date": dates, "tmin": np.minimum(tmin, tmax), "tmax": np.maximum(tmin, tmax),
         "rain_mm": np.maximum(vals["PRECTOTCORR"], 0.0)},
        dtypes={"date": "date", "tmin": "float64", "tmax": "float64", "rain_mm": "float64"},
        units=WEATHER_UNITS,
    )


class PowerClient:
    """Blocking POWER client.

    ``requests_made`` counts HTTP attempts, which makes the cache contract
    observable. ``session`` and ``sleep`` are injectable for tests.
    """

    def __init__(
        self,
        cache_dir: str | os.PathLike | None = None,
        session: Any = None,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        community: str = "AG",
    ):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.session = session if session is not None else requests.Session()
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.sleep = sleep
        self.community = community
        self.requests_made = 0

    def _get(self, params: dict) -> Any:
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            self.requests_made += 1
            try:
                resp = self.session.get(POWER_URL, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                log.warning("POWER request failed (attempt %d): %s", attempt + 1, exc)
                continue
            status = resp.status_code
            if status == 429 or status >= 500:
                last = NetworkFailureError(f"HTTP {status}")
                log.warning("POWER returned HTTP %d (attempt %d)", status, attempt + 1)
                continue
            if status != 200:
                raise NetworkFailureError(f"POWER returned HTTP {status}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ApiSchemaChangeError(f"POWER response is not JSON: {exc}") from None
        raise NetworkFailureError(f"POWER request failed after {self.retries} attempts: {last}")

    def fetch_json(self, lat: float, lon: float, start, end) -> Any:
        start, end = _check_request(lat, lon, start, end)
        name = cache_name(lat, lon, start, end)
        if self.cache_dir is not None:
            hit = self.cache_dir / name
            if hit.is_file():
                return json.loads(hit.read_text(encoding="utf-8"))
        doc = self._get({
            "parameters": ",".join(PARAMETERS),
            "community": self.community,
            "latitude": f"{lat:.4f}",
            "longitude": f"{lon:.4f}",
            "start": f"{start:%Y%m%d}",
            "end": f"{end:%Y%m%d}",
            "format": "JSON",
        })
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            tmp = self.cache_dir / f".{name}.tmp-{os.getpid()}"
            tmp.write_text(json.dumps(doc), encoding="utf-8")
            os.replace(tmp, self.cache_dir / name)
        return doc

    def fetch(self, lat: float, lon: float, start, end) -> Table:
        start, end = _check_request(lat, lon, start, end)
        return parse_power_json(self.fetch_json(lat, lon, start, end), start, end)


def fetch_power_daily(
    lat: float,
    lon: float,
    start,
    end,
    source: str | os.PathLike = "live",
    cache_dir: str | os.PathLike | None = None,
    client: PowerClient | None = None,
) -> Table:
    """Daily weather for one point.

    ``source="live"`` queries the API (through ``client`` if given, caching
    under ``cache_dir``); ``source="fixture"`` reads the bundled fixtures;
    any other value is taken as a fixture directory.
    """
    start, end = _check_request(lat, lon, start, end)
    if str(source) == "live":
        client = client or PowerClient(cache_dir=cache_dir)
        return client.fetch(lat, lon, start, end)
    folder = FIXTURE_DIR if str(source) == "fixture" else Path(source)
    path = folder / cache_name(lat, lon, start, end)
    if not path.is_file():
        raise MissingWeatherDataError(f"no POWER fixture {path.name} in {folder}")
    return parse_power_json(json.loads(path.read_text(encoding="utf-8")), start, end)
