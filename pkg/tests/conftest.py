import os

import numpy as np
import pytest


def _seed():
    return int(os.environ.get("DHYM_LAB_SEED", "20260810"))


@pytest.fixture
def rng():
    return np.random.default_rng(_seed())


@pytest.fixture
def seed():
    return _seed()
