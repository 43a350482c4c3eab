from pathlib import Path

import numpy as np
import pytest

from boxpose.geom import CameraIntrinsics

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def cam():
    return CameraIntrinsics.simple(500.0, 320.0, 240.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures():
    return FIXTURES
