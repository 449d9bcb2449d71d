import os

import numpy as np
import pytest

from cavitydyn.dressing import cavity_from_resonance, dressed_fields
from cavitydyn.grid import GridSpec, make_grid
from cavitydyn.surfaces import bound_system, catalyst_system
from cavitydyn.units import to_au

LONG = os.environ.get("CAVITYDYN_LONG", "0") == "1"


def pytest_collection_modifyitems(config, items):
    if LONG:
        return
    skip = pytest.mark.skip(reason="long tier; set CAVITYDYN_LONG=1")
    for item in items:
        if "longtier" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def grid2048():
    return make_grid(GridSpec.from_angstrom(1.0, 12.0, 2048))


@pytest.fixture(scope="session")
def catalyst(grid2048):
    sys_ = catalyst_system()
    cav = cavity_from_resonance(sys_, to_au(2.3, "angstrom"), to_au(54.0, "meV"), grid2048.q)
    return sys_, cav, dressed_fields(sys_, cav, grid2048)


@pytest.fixture(scope="session")
def bound(grid2048):
    sys_ = bound_system()
    cav = cavity_from_resonance(sys_, to_au(2.9, "angstrom"), to_au(54.0, "meV"), grid2048.q)
    return sys_, cav, dressed_fields(sys_, cav, grid2048)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
