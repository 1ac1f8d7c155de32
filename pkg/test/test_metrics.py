import numpy as np
import pytest

from geometry.metric import MetricSpec
from metrics.minkowski import Minkowski
from metrics.preset import load_metric, presets
from util.errors import ConfigurationError, DomainError

CONFIGS = [
    {"preset": "minkowski", "dimension": 3},
    {"preset": "conformal-minkowski", "dimension": 2, "parameter": {"factor": 3.0}},
    {"preset": "ultrastatic-sphere", "dimension": 2, "parameter": {"radius": 2.0}},
    {"preset": "bump-perturbed", "dimension": 2, "parameter": {"amplitude": 0.3, "width": 0.6, "center": [1.0, 0.2, -0.1]}},
    {"preset": "bump-perturbed", "dimension": 3, "parameter": {"static": True, "amplitude": 0.2, "center": [0.0, 0.5, 0.0]}},
    {"preset": "custom", "dimension": 2, "parameter": {"coefficients": [
        {"power": [0, 2, 0], "coefficient": -0.05}, {"power": [1, 0, 1], "coefficient": 0.02}]}},
]


def sample_points(spec: MetricSpec, count: int = 5) -> np.ndarray:
    rng = np.random.default_rng(3)
    middle = 0.5 * (spec.lower + spec.upper)
    half = 0.25 * (spec.upper - spec.lower)
    return middle + half * rng.uniform(-1, 1, size=(count, spec.n))


def test_registry_names():
    assert set(presets()) == {"minkowski", "conformal-minkowski", "ultrastatic-sphere", "bump-perturbed", "custom"}


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: c["preset"])
def test_derivatives_match_finite_differences(config):
    spec = load_metric(config)
    X = sample_points(spec)
    for i in range(spec.n):
        e = np.zeros(spec.n)
        e[i] = 1e-6
        np.testing.assert_allclose(spec.dbeta(X)[:, i], (spec.beta(X + e) - spec.beta(X - e)) / 2e-6, atol=1e-7)
        np.testing.assert_allclose(spec.dkappa(X)[:, i], (spec.kappa(X + e) - spec.kappa(X - e)) / 2e-6, atol=1e-6)


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: c["preset"])
def test_lorentzian_signature(config):
    spec = load_metric(config)
    for g in spec.covariant(sample_points(spec)):
        eigenvalues = np.sort(np.linalg.eigvalsh(g))
        assert eigenvalues[0] < 0
        assert np.all(eigenvalues[1:] > 0)


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: c["preset"])
def test_contravariant_is_the_inverse(config):
    spec = load_metric(config)
    X = sample_points(spec)
    product = spec.covariant(X) @ spec.contravariant(X)
    np.testing.assert_allclose(product, np.broadcast_to(np.eye(spec.n), product.shape), atol=1e-12)


def test_static_flags():
    assert load_metric(CONFIGS[0]).static
    assert load_metric(CONFIGS[2]).static
    assert not load_metric(CONFIGS[3]).static
    assert load_metric(CONFIGS[4]).static
    assert not load_metric(CONFIGS[5]).static


def test_sphere_longitude_is_periodic():
    spec = load_metric(CONFIGS[2])
    assert spec.periodic == {2: pytest.approx(2 * np.pi)}
    assert spec.distance_G(np.array([0.0, 1.0, 3.0]), np.array([0.0, 1.0, -3.0])) == pytest.approx(2 * np.pi - 6.0)


def test_scaled_metric():
    spec = load_metric(CONFIGS[3])
    X = sample_points(spec)
    scaled = spec.scaled(2.5)
    np.testing.assert_allclose(scaled.beta(X), 2.5 * spec.beta(X))
    np.testing.assert_allclose(scaled.kappa(X), spec.kappa(X))
    with pytest.raises(DomainError):
        spec.scaled(0.0)


@pytest.mark.parametrize("dimension", [1, 4])
def test_spatial_dimension(dimension):
    with pytest.raises(DomainError):
        Minkowski(dimension, [-1.0] * (dimension + 1), [1.0] * (dimension + 1))


@pytest.mark.parametrize("config", [
    {"preset": "anti-de-sitter"},
    {"preset": "minkowski", "dimension": 2, "chart": {"lower": [0, 0], "upper": [1, 1]}},
    {"preset": "conformal-minkowski", "parameter": {"factor": -1.0}},
    {"preset": "ultrastatic-sphere", "dimension": 3},
    {"preset": "ultrastatic-sphere", "chart": {"lower": [0, 0, -3], "upper": [1, 3, 3]}},
    {"preset": "bump-perturbed", "parameter": {"width": 0.0}},
    {"preset": "bump-perturbed", "dimension": 2, "parameter": {"center": [0.0, 0.0]}},
    {"preset": "custom", "parameter": {"coefficients": [{"power": [1, 0], "coefficient": 1.0}]}},
])
def test_invalid_configurations(config):
    with pytest.raises(ConfigurationError):
        load_metric(config)


def test_to_dict():
    spec = load_metric(CONFIGS[1])
    description = spec.to_dict()
    assert description["preset"] == "conformal-minkowski"
    assert description["parameter"]["factor"] == 3.0
    assert description["chart"]["lower"] == [-1.0, -4.0, -4.0]
