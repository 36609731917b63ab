import numpy as np
import pytest

from torusq.chart import TorusChart
from torusq.chart1d import OneDChart
from torusq.potentials import CentralForcePotential, OneDPotential

QUARTIC_LAMBDA = 0.01


@pytest.fixture(scope="session")
def iso_pot():
    return CentralForcePotential(u=(0.5,), omega0=1.0)


@pytest.fixture(scope="session")
def quartic_pot():
    return CentralForcePotential(u=(0.5, QUARTIC_LAMBDA), omega0=1.0)


@pytest.fixture(scope="session")
def iso_chart(iso_pot):
    return TorusChart(iso_pot, sector=+1)


@pytest.fixture(scope="session")
def quartic_chart(quartic_pot):
    return TorusChart(quartic_pot, sector=+1)


@pytest.fixture(scope="session")
def quartic_chart_neg(quartic_pot):
    return TorusChart(quartic_pot, sector=-1)


@pytest.fixture(scope="session")
def oned_quartic():
    return OneDChart(OneDPotential(u=(0.5, QUARTIC_LAMBDA), omega0=1.0))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
