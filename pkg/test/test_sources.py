import numpy as np
import pytest

from geometry.covector import covector, null_covector
from geometry.metric import Point
from metrics.minkowski import Minkowski
from solver.grid import Grid
from sources.source import BOX_BUMP, PACKET, TIMELINE, make_box_bump, make_packet, make_timeline_source
from sources.spectral import bessel_potential, cone_fraction, spacelike_fraction
from util.errors import ConfigurationError, PreconditionError


@pytest.fixture
def spec():
    return Minkowski(2, [-1.0, -5.0, -5.0], [12.0, 5.0, 5.0])


@pytest.fixture
def grid(spec):
    return Grid(spec, [-4.0, -4.0], [4.0, 4.0], 128, 0.0, 5.0)


def test_packet_is_microlocalized(spec, grid):
    xi = null_covector(spec, Point.of(2.0, 0.0, 0.0), [1.0, 0.0])
    packet = make_packet(spec, grid, xi, 0.9, 1.0)
    assert packet.kind == PACKET
    assert packet.width == pytest.approx(2.5 / (0.9 * 2 * np.pi))
    assert cone_fraction(packet.samples.values, grid.spacing, xi.xi, 0.9) > 0.9
    assert packet.to_dict()["levels"] == [packet.samples.first_level, packet.samples.last_level]


def test_packet_preconditions(spec, grid):
    base = Point.of(2.0, 0.0, 0.0)
    with pytest.raises(PreconditionError):
        make_packet(spec, grid, covector(spec, base, [-1.0, 0.0, 0.0]), 0.9, 1.0)
    xi = null_covector(spec, base, [1.0, 0.0])
    with pytest.raises(PreconditionError):
        make_packet(spec, grid, xi, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        make_packet(spec, grid, xi, 0.9, 4.0)


def test_box_bump_solution(spec, grid):
    term, solution = make_box_bump(spec, grid, Point.of(2.0, 0.5, 0.0), 0.6, h=0.9)
    assert term.kind == BOX_BUMP
    assert term.solution is solution
    assert solution.sup_norm() == pytest.approx(1.0, abs=0.05)
    assert term.samples.values.shape == solution.values.shape


def test_timeline_source_is_spacelike(spec, grid):
    term, solution = make_timeline_source(spec, grid, Point.of(2.0, 0.0, 0.0), 0.6, 1.0)
    assert term.kind == TIMELINE
    assert term.width == pytest.approx(3 * 0.0625)
    assert spacelike_fraction(solution.values, grid.spacing) > 0.5


def test_bessel_potential():
    values = np.random.default_rng(0).normal(size=(16, 16))
    np.testing.assert_array_equal(bessel_potential(values, [0.1, 0.1], 0), values)
    constant = np.full((8, 8), 3.0)
    np.testing.assert_allclose(bessel_potential(constant, [0.1, 0.1], 2), constant)
    assert np.std(bessel_potential(values, [0.1, 0.1], 2)) < np.std(values)
