import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maskforge.masks import BinaryMask

FIXTURES = Path(__file__).parent / "fixtures"


def random_mask(rng: np.random.Generator, max_h: int, max_w: int) -> BinaryMask:
    h = int(rng.integers(1, max_h + 1))
    w = int(rng.integers(1, max_w + 1))
    density = float(rng.uniform(0.0, 1.0))
    bits = rng.random((h, w)) < density
    return BinaryMask(h, w, bits)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
