import numpy as np
import pytest

import helpers


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)


@pytest.fixture
def chain_net():
    return helpers.binary_chain_net()


@pytest.fixture
def hw1():
    return helpers.hw_factored_net()


@pytest.fixture
def hw2():
    return helpers.hw_coupled_net()
