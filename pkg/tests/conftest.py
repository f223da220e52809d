import numpy as np
import pytest

from lrexclusion.fields import gaussian
from lrexclusion.kernel import nearest_neighbor, power_law


@pytest.fixture
def nn():
    return nearest_neighbor()


@pytest.fixture
def pl():
    return power_law(3, 8)


@pytest.fixture
def bump():
    return gaussian(2.0, 0.4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
