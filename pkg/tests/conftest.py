import numpy as np
import pytest

from morphbo.baselines import generate_baselines


@pytest.fixture(scope="session")
def baselines():
    return generate_baselines()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
