import numpy as np
import pytest
from click.testing import CliRunner

from strange_reservoir.numerics.dynsys import (
    DynamicalSystem,
    ObservationFn,
    SystemName,
    orbit,
)
from tests.const import LORENZ_IC, VDP_IC


class StrangeReservoirRunner(CliRunner):
    """Make sure STDOUT and STDERR are kept separate when testing the CLI."""

    def __init__(self) -> None:
        try:
            super().__init__(mix_stderr=False)
        except TypeError:
            # click 8.2 always keeps them apart
            super().__init__()


@pytest.fixture(scope="session")
def runner():
    return StrangeReservoirRunner()


@pytest.fixture
def rng():
    return np.random.default_rng(20221013)


@pytest.fixture(scope="session")
def lorenz():
    return DynamicalSystem(SystemName.LORENZ)


@pytest.fixture(scope="session")
def vanderpol():
    return DynamicalSystem(SystemName.VANDERPOL)


@pytest.fixture(scope="session")
def u_obs():
    return ObservationFn.coordinate(0)


@pytest.fixture(scope="session")
def lorenz_attractor(lorenz):
    """3000 points on the Lorenz attractor after a 20 time unit transient."""
    path = orbit(lorenz, np.array(LORENZ_IC), 5000)
    return path[2001:]


@pytest.fixture(scope="session")
def vdp_cycle(vanderpol):
    path = orbit(vanderpol, np.array(VDP_IC), 3000)
    return path[2001:]
