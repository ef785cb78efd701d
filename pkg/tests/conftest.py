import numpy as np
import pytest

from slagfib.ambient import DefiningPolynomial, FamilyParams, PartitionedIndex, ToricPotential
from slagfib.config import RunConfig
from slagfib.geometry import Geometry
from slagfib.local_model import ModelParams

DESK_P = DefiningPolynomial(2, {(0, 0, 0): 2.0, (0, 0, 1): 1.0})
CONST_P = DefiningPolynomial(2, {(0, 0, 0): 2.0})


@pytest.fixture(scope="session")
def desk_cfg():
    return RunConfig.default()


@pytest.fixture(scope="session")
def part():
    return PartitionedIndex(2, (0, 1), (2,))


def make_geom(p=DESK_P, pot=None, t=0.01, c=(0.0, 0.0), r=(1.0,)):
    part = PartitionedIndex(2, (0, 1), (2,))
    pot = pot or ToricPotential.flat(2)
    return Geometry(part, pot, p, t), ModelParams(r, c, part, FamilyParams(t))


@pytest.fixture(scope="session")
def desk():
    return make_geom()


@pytest.fixture(scope="session")
def flat_const():
    return make_geom(p=CONST_P)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
