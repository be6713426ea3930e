import numpy as np
import pytest

from skyframes.ingest import Region


@pytest.fixture(scope="session")
def region():
    return Region(51.47, -0.45)


@pytest.fixture(scope="session")
def params(region):
    return region.projection()


@pytest.fixture(scope="session")
def viewport(region):
    return region.viewport()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
