import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nhprk.tableau import lobatto_pair


@pytest.fixture(scope="session")
def pairs():
    return {s: lobatto_pair(s) for s in (2, 3, 4, 5)}


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
