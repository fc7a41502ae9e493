import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import trispan.autograd as ag


@pytest.fixture(autouse=True)
def _fresh_tape():
    """Keep the module-level default tape from growing across tests."""
    ag._default_tape.clear()
    yield
    ag._default_tape.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
