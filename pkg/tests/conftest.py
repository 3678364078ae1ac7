import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def random_image(rng):
    return rng.uniform(0.0, 255.0, size=(8, 8, 3))
