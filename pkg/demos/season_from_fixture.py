"""Simulate a season on bundled POWER data extended with generated weather.

Usage: python demos/season_from_fixture.py [outdir]

Reads the offline fixture (31 January days near Nairobi), appends 150
generated days, runs the crop model and plots temperature and soil water.
"""
import sys
from pathlib import Path

from agrisynth.generate import WeatherParams
from agrisynth.power import fetch_power_daily
from agrisynth.rng import Rng
from agrisynth.simulate import CropParams, ManagementAction, blend_weather, run_season
from agrisynth.visualize import ChartSpec, render_timeseries, save_svg


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    out.mkdir(parents=True, exist_ok=True)

    real = fetch_power_daily(-1.2921, 36.8219, "2021-01-01", "2021-01-31", source="fixture")
    params = WeatherParams(t_mean=20.0, t_amp=2.0, t_phase=45.0)
    weather = blend_weather(real, params, 150, Rng(2021))

    crop = CropParams(t_base=8.0, potential_yield=5500.0)
    actions = [ManagementAction.fertilize(0, n=60.0, p=30.0, k=20.0), ManagementAction.fertilize(45, n=40.0),
               ManagementAction.irrigate(70, 25.0)]
    log = run_season(weather, crop, actions)

    last = log.daily.take([-1])
    print(f"season length {weather.n_rows} days, final stage {last['stage_name'][0]}")
    print(f"final yield {log.final_yield:.0f} kg/ha of {crop.potential_yield:.0f} potential")
    print(f"nutrients applied N/P/K: {log.nutrient_totals}")

    save_svg(render_timeseries(weather, "date", ["tmin", "tmax"], ChartSpec(title="Daily temperature")),
             out / "temperature.svg")
    save_svg(render_timeseries(log.daily, "date", ["soil_water"], ChartSpec(title="Soil water (mm)")),
             out / "soil_water.svg")
    print(f"wrote charts to {out}")


if __name__ == "__main__":
    main()
