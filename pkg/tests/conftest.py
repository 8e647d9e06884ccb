import numpy as np
import pytest

from sthawkes.background import BackgroundModel
from sthawkes.catalog import EventCatalog, Region


@pytest.fixture
def unit_region():
    return Region(0.0, 10.0, 0.0, 10.0)


@pytest.fixture
def small_catalog(unit_region):
    rng = np.random.default_rng(7)
    n = 40
    x = rng.uniform(1, 9, n)
    y = rng.uniform(1, 9, n)
    t = np.sort(rng.uniform(0, 20.0, n))
    return EventCatalog(x, y, t, unit_region, T=20.0)


@pytest.fixture
def uniform_bg(unit_region):
    return BackgroundModel.uniform(unit_region, 20.0, n=40.0)
