"""Rebuild the bundled fixtures under src/agrisynth/data and tests/golden.

Every value is produced by the package's own generators at fixed seeds;
nothing here is observed data. The POWER fixture reuses the public
response layout so that the parser is exercised on the real shape.
"""

import datetime as dt
import json
from pathlib import Path

import numpy as np

from agrisynth.catalog import CatalogEntry, empty_catalog, register_output
from agrisynth.generate import SoilGridParams, TrialGenParams, WeatherParams, gen_soil_grid, gen_trials, gen_weather
from agrisynth.power import PARAMETERS, cache_name
from agrisynth.rng import Rng
from agrisynth.table import Table, write_csv

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "agrisynth" / "data"
GOLDEN = ROOT / "tests" / "golden"

LAT, LON = -1.2921, 36.8219
START, END = dt.date(2021, 1, 1), dt.date(2021, 1, 31)
INVERTED_DAY = 9  # 2021-01-10 ships with T2M_MIN > T2M_MAX


def power_fixture() -> None:
    w = gen_weather(WeatherParams(t_mean=20.0, t_amp=2.0, t_phase=45.0), START, 31, Rng(2021))
    tmin = np.round(w["tmin"], 2)
    tmax = np.round(w["tmax"], 2)
    rain = np.round(w["rain_mm"], 2)
    keys = [f"{START + dt.timedelta(days=i):%Y%m%d}" for i in range(31)]
    raw_min, raw_max = tmin.copy(), tmax.copy()
    raw_min[INVERTED_DAY], raw_max[INVERTED_DAY] = tmax[INVERTED_DAY], tmin[INVERTED_DAY]
    doc = {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [LON, LAT, 1661.0]},
        "properties": {"parameter": {
            "T2M_MAX": dict(zip(keys, raw_max.tolist())),
            "T2M_MIN": dict(zip(keys, raw_min.tolist())),
            "PRECTOTCORR": dict(zip(keys, rain.tolist())),
        }},
        "header": {
            "title": "NASA/POWER Source Native Resolution Daily Data",
            "api": {"version": "v2.5.0", "name": "POWER Daily API"},
            "sources": ["merra2", "power"],
            "fill_value": -999.0,
            "time_standard": "LST",
            "start": f"{START:%Y%m%d}",
            "end": f"{END:%Y%m%d}",
        },
        "messages": [],
        "parameters": {
            "T2M_MAX": {"units": "C", "longname": "Temperature at 2 Meters Maximum"},
            "T2M_MIN": {"units": "C", "longname": "Temperature at 2 Meters Minimum"},
            "PRECTOTCORR": {"units": "mm/day", "longname": "Precipitation Corrected"},
        },
        "times": {"data": 0.0, "process": 0.0},
    }
    assert tuple(doc["properties"]["parameter"]) == PARAMETERS
    (DATA / "power").mkdir(parents=True, exist_ok=True)
    (DATA / "power" / cache_name(LAT, LON, START, END)).write_text(json.dumps(doc, indent=1) + "\n")
    golden = Table({"date": w["date"], "tmin": tmin, "tmax": tmax, "rain_mm": rain},
                   dtypes={"date": "date"}, units={"tmin": "degC", "tmax": "degC", "rain_mm": "mm"})
    write_csv(golden, GOLDEN / "power_weather.csv", GOLDEN / "power_weather.schema.json")


def catalog_fixture() -> None:
    manifest = DATA / "catalog.json"
    if manifest.exists():
        manifest.unlink()
    catalog = empty_catalog(manifest)
    items = [
        ("weather_r1_2021", "weather", "R1", START, dt.date(2021, 12, 31), "weather_r1_2021.csv",
         gen_weather(WeatherParams(), START, 365, Rng(7)), "gen_weather defaults, seed=7"),
        ("soil_r1", "soil", "R1", START, START, "soil_r1.csv",
         gen_soil_grid(SoilGridParams(), Rng(11)), "gen_soil_grid defaults, seed=11"),
        ("trials_r1", "trials", "R1", dt.date(2019, 1, 1), dt.date(2021, 12, 31), "trials_r1.csv",
         gen_trials(TrialGenParams(n=400), Rng(13)), "gen_trials n=400, seed=13"),
    ]
    for eid, kind, region, s, e, name, table, prov in items:
        write_csv(table, DATA / name, DATA / name.replace(".csv", ".schema.json"))
        catalog = register_output(catalog, CatalogEntry(eid, kind, region, s, e, str(DATA / name),
                                                        str(DATA / name.replace(".csv", ".schema.json")), prov))


if __name__ == "__main__":
    power_fixture()
    catalog_fixture()
