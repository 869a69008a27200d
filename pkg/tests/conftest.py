import numpy as np
import pytest

from lyapunov_lab.harmonic import StripConfig
from lyapunov_lab.spectral import TorusGrid

# vertical resolution with the lowest collocation roundoff floor; used wherever
# a test differences solver outputs in time
FLOW_STRIP = StripConfig(m_vert=32)


@pytest.fixture
def g32():
    return TorusGrid(1, 32)


@pytest.fixture
def g64():
    return TorusGrid(1, 64)


@pytest.fixture
def g128():
    return TorusGrid(1, 128)


@pytest.fixture
def g2d():
    return TorusGrid(2, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
