import numpy as np
import pytest

from ghmctune.models import gaussian_model
from ghmctune.saia import default_map


@pytest.fixture(scope="session")
def saia_map():
    return default_map()


@pytest.fixture(scope="session")
def std_gauss_1d():
    return gaussian_model(np.eye(1), name="g1")


@pytest.fixture(scope="session")
def std_gauss_2d():
    return gaussian_model(np.eye(2), name="g2")
