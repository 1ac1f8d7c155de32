import numpy as np
import pytest

from geometry.observer import AffineCurve
from metrics.minkowski import Minkowski
from metrics.preset import load_metric


@pytest.fixture
def minkowski():
    return Minkowski(2, [-1.0, -4.0, -4.0], [12.0, 4.0, 4.0])


@pytest.fixture
def minkowski3():
    return Minkowski(3, [-1.0, -4.0, -4.0, -4.0], [12.0, 4.0, 4.0, 4.0])


@pytest.fixture
def sphere():
    return load_metric({"preset": "ultrastatic-sphere", "dimension": 2, "parameter": {"radius": 1.0}})


@pytest.fixture
def time_axis():
    """Static observer at the spatial origin over t in [1, 9]."""
    return AffineCurve([5.0, 0.0, 0.0], [4.0, 0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
