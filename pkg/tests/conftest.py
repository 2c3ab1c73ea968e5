"""Shared fixtures: synthetic price panels, reference models, random histories"""

from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from oracle import ExpUniformModel
from settings import REFERENCE_LAMBDA_BAR, REFERENCE_PI_BAR


def make_panel_rows(start, days, locations=('ZONE_A', 'ZONE_B'), seed=0, skip_days=(), blank=()):
    """Rows of a price CSV; `blank` holds (day, location, hour) keys whose rt price is left empty"""
    rng = np.random.default_rng(seed)
    rows = []
    for d in range(days):
        day = start + timedelta(days=d)
        if day in skip_days:
            continue
        for loc in locations:
            for hour in range(24):
                da = round(float(rng.uniform(20, 80)), 2)
                rt = round(da + float(rng.normal(0, 10)), 2)
                rt_text = '' if (day, loc, hour) in blank else rt
                rows.append({'date': day.isoformat(), 'location': loc, 'hour': hour,
                             'da_price': da, 'rt_price': rt_text})
    return rows


@pytest.fixture
def panel_writer(tmp_path):
    """Write a synthetic panel CSV and return its path"""
    counter = {'n': 0}

    def write(start=date(2017, 1, 1), days=30, name=None, rows=None, **kwargs):
        counter['n'] += 1
        path = tmp_path / (name or f"panel_{counter['n']}.csv")
        if rows is None:
            rows = make_panel_rows(start, days, **kwargs)
        pd.DataFrame(rows, columns=['date', 'location', 'hour', 'da_price', 'rt_price']).to_csv(path, index=False)
        return path

    return write


@pytest.fixture
def five_good_model():
    return ExpUniformModel(REFERENCE_LAMBDA_BAR, REFERENCE_PI_BAR, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_history(rng, num_goods, length, integer_prices=False, max_price=5.0):
    """(clearing, spot) arrays of shape (length, num_goods)"""
    if integer_prices:
        clearing = rng.integers(1, int(max_price) + 1, size=(length, num_goods)).astype(float)
    else:
        clearing = rng.uniform(0.1, max_price, size=(length, num_goods))
    spot = clearing + rng.normal(0.5, 1.5, size=(length, num_goods))
    return clearing, spot
