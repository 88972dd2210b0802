import pytest

from etank import EnergyLaw, SimConfig, ValveConfig, simulate
from etank.scenarios import example1

CANONICAL = SimConfig(dt=1e-4, t_end=3.0)


@pytest.fixture(scope="session")
def example1_runs():
    """Unprotected constant-force runs under both charts, dt=1e-4, t_end=3."""
    runs = {}
    for law in (EnergyLaw.EXPONENTIAL, EnergyLaw.QUADRATIC):
        runs[law] = simulate(example1(law=law), CANONICAL, scenario="example1")
    return runs


@pytest.fixture(scope="session")
def valve_run():
    """Valve-protected exponential run (hard valve, epsilon=0.01), dt=1e-4, t_end=3."""
    sys_ = example1(law=EnergyLaw.EXPONENTIAL, valve=ValveConfig(epsilon=0.01))
    return simulate(sys_, CANONICAL, scenario="example1")
