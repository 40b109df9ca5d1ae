import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uptakecast.timeseries import MonthStamp, TimeSeries, UptakeSeries
from uptakecast.web import QueryPanel

JAN2011 = MonthStamp(2011, 1)


def make_series(values, start=JAN2011) -> TimeSeries:
    return TimeSeries(start, np.asarray(values, dtype=float))


def synth_vaccine(seed: int, n_months: int = 57, n_queries: int = 58,
                  start: MonthStamp = JAN2011) -> tuple[UptakeSeries, QueryPanel]:
    """A vaccination-uptake-shaped series plus a loosely informative panel."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_months)
    season = rng.uniform(5, 15) * np.sin(2 * np.pi * (t + rng.integers(0, 12)) / 12)
    uptake = np.clip(70 + rng.uniform(-0.2, 0.3) * t + season + rng.normal(0, 4, n_months), 0, None)
    Q = np.empty((n_months, n_queries))
    for j in range(n_queries):
        w = rng.uniform(-0.5, 1.0)
        Q[:, j] = np.clip(50 + w * (uptake - uptake.mean()) + rng.normal(0, 10, n_months), 0, 100)
    names = tuple(f"q{j:02d}" for j in range(n_queries))
    return (
        UptakeSeries(TimeSeries(start, uptake)),
        QueryPanel(start, names, Q),
    )


@pytest.fixture
def small_vaccine():
    """Short series and narrow panel for fast harness tests."""
    return synth_vaccine(11, n_months=40, n_queries=12)
