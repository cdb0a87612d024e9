import numpy as np
import pytest
from hypothesis import settings

from onway.choice import table1_coefficients
from onway.spatial import Market, MetricDistance, Outlet, Point, Zone
from onway.synth import generate_synthetic, synthetic_market

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def three_outlet_market():
    outlets = [
        Outlet("A", Point(1.0, 0.2), 84.0),
        Outlet("B", Point(2.5, 1.5), 88.0),
        Outlet("C", Point(2.7, 1.6), 82.0),
    ]
    zones = [
        Zone("Z1", Point(0.0, 0.0), 3.0),
        Zone("Z2", Point(4.0, 0.0), 1.0),
        Zone("Z3", Point(2.0, 3.0), 2.0),
        Zone("Z4", Point(0.5, 2.5), 0.5),
    ]
    return Market(outlets, zones, MetricDistance())


@pytest.fixture(scope="session")
def small_market():
    return three_outlet_market()


@pytest.fixture(scope="session")
def small_trips(small_market):
    return generate_synthetic(table1_coefficients("latent2"), small_market, 50, seed=11)


@pytest.fixture(scope="session")
def medium_market():
    return synthetic_market(8, 25, extent_km=6.0, seed=4)


@pytest.fixture(scope="session")
def medium_trips(medium_market):
    return generate_synthetic(table1_coefficients("latent2"), medium_market, 800, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
