from pathlib import Path

import numpy as np
import pytest

from agrisynth.generate import WeatherParams, gen_weather
from agrisynth.rng import Rng
from agrisynth.table import Table

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def rng():
    return Rng(12345)


@pytest.fixture
def golden_dir():
    return GOLDEN


@pytest.fixture
def small_table():
    return Table(
        {
            "id": np.arange(4, dtype=np.int64),
            "season": ["A", "A", "B", "B"],
            "yield": [1.0, 2.0, 3.0, 4.0],
            "when": ["2020-01-01", "2020-06-01", "2021-01-01", "2021-06-01"],
        },
        dtypes={"season": "category", "when": "date"},
        units={"yield": "kg/ha"},
    )


@pytest.fixture
def weather_year():
    return gen_weather(WeatherParams(), "2021-01-01", 365, Rng(7))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> one-line verdict, echoed in the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
