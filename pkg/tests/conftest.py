import math

import pytest

from ssfourier.ifs import build_system


@pytest.fixture
def cantor():
    """Middle-third Cantor measure in its usual coordinates (support [0, 1])."""
    return build_system([(1 / 3, 0.0), (1 / 3, 2 / 3)], [0.5, 0.5])


@pytest.fixture
def cantor_normal():
    return build_system([(1 / 3, 0.0), (1 / 3, 1.0)], [0.5, 0.5])


@pytest.fixture
def hetero():
    return build_system([(1 / 2, 0.0), (1 / 4, 3 / 4)], [0.5, 0.5])


@pytest.fixture
def hetero_envelope():
    """Two scales, already normalized with max|a| < 1/2, so n=8 stays desk-sized."""
    return build_system([(1 / 3, 0.0), (1 / 4, 1.0)], [0.5, 0.5])


@pytest.fixture
def uniform():
    return build_system([(1 / 2, 0.0), (1 / 2, 1 / 2)], [0.5, 0.5])


LOG2 = math.log(2)
LOG3 = math.log(3)
