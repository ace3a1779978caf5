import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_patch(rng, size=27):
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def constant_patch(value, size=27):
    return np.full((size, size, 3), value, dtype=np.uint8)


@pytest.fixture
def patches(rng):
    return [random_patch(rng) for _ in range(15)]
