import datetime as dt

import numpy as np
import pytest

from countcast.data import CountPanel, Feature, SeriesKey, parse_cumulative_csv, to_daily_increments
from countcast.data import ISO_MAPPING
from countcast.lstm import TrainConfig, train
from countcast.synthetic import epidemic_cumulative_csv


def make_panel(values, regions=None):
    values = np.asarray(values, dtype=np.int64)
    T, D = values.shape
    if regions is None:
        regions = [f"R{d // 3}" for d in range(D)]
    features = list(Feature)
    keys = [SeriesKey(regions[d], features[d % 3], d) for d in range(D)]
    dates = [dt.date(2020, 3, 1) + dt.timedelta(days=t) for t in range(T)]
    return CountPanel(dates, keys, values)


@pytest.fixture(scope="session")
def epidemic_panel():
    raw = epidemic_cumulative_csv(n_days=40, regions=("AN", "MD", "CT"), seed=3)
    return to_daily_increments(parse_cumulative_csv(raw, ISO_MAPPING))


@pytest.fixture(scope="session")
def small_model(epidemic_panel):
    cfg = TrainConfig(steps=20, hidden=4, k=5, seed=11)
    return train(epidemic_panel, cfg)[0]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
