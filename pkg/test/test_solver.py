import numpy as np
import pytest

from geometry.metric import Point
from metrics.minkowski import Minkowski
from metrics.preset import load_metric
from solver.forcing import SampledSource, local_box
from solver.grid import Grid
from solver.snapshot import read_snapshot, write_snapshot
from solver.wave import Recording, box_g_apply, energy_drift, solve_linear
from sources.source import box_points, bump_profile, make_box_bump
from util.errors import ConfigurationError, DomainError, PreconditionError

GRID = {"lower": [-4.0, -4.0], "upper": [4.0, 4.0], "cells": 64, "time": [0.0, 3.0]}


@pytest.fixture
def spec():
    return Minkowski(2, [-1.0, -5.0, -5.0], [12.0, 5.0, 5.0])


@pytest.fixture
def grid(spec):
    return Grid.from_config(spec, GRID)


def test_grid_geometry(grid):
    np.testing.assert_allclose(grid.dx, [0.125, 0.125])
    assert grid.shape == (65, 65)
    assert grid.c_max == pytest.approx(1.0)
    assert grid.dt <= 0.4 * 0.125 + 1e-12
    assert grid.steps * grid.dt == pytest.approx(3.0)
    assert grid.times[-1] == pytest.approx(3.0)
    assert grid.times[grid.level(1.01)] == pytest.approx(1.01, abs=grid.dt / 2)


def test_grid_points(grid):
    points = grid.points(1.5)
    assert points.shape == (65, 65, 3)
    assert np.all(points[..., 0] == 1.5)
    np.testing.assert_allclose(points[3, 5, 1:], [-4.0 + 3 * 0.125, -4.0 + 5 * 0.125])
    box = grid.index_box([0.0, 0.0], [0.5, 0.25])
    window = grid.points(0.0, box)
    assert window.shape == (box[0].stop - box[0].start, box[1].stop - box[1].start, 3)
    np.testing.assert_allclose(window[0, 0, 1:], [grid.axes[0][box[0].start], grid.axes[1][box[1].start]])


def test_grid_interior(grid):
    low, high = grid.interior_bounds()
    np.testing.assert_allclose(low, [-4.0 + 17 * 0.125] * 2)
    grid.require_interior([1.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        grid.require_interior([1.0, 3.5, 0.0])


def test_refined_grid(grid):
    fine = grid.refined(2)
    assert fine.cells.tolist() == [128, 128]
    assert fine.sponge == 32
    assert fine.dt == pytest.approx(grid.dt / 2, rel=0.05)


@pytest.mark.parametrize("change", [
    {"sponge": 8},
    {"cells": 36},
    {"cfl": 0.7},
    {"time": [2.0, 1.0]},
    {"upper": [6.0, 4.0]},
])
def test_invalid_grids(spec, change):
    with pytest.raises((ConfigurationError, DomainError)):
        Grid.from_config(spec, dict(GRID, **change))


def test_reflecting_grid_has_no_layer(spec):
    grid = Grid.from_config(spec, dict(GRID, cells=16), reflecting=True)
    assert grid.sponge == 0
    assert grid.reflecting


def test_periodic_charts_are_rejected():
    sphere = load_metric({"preset": "ultrastatic-sphere"})
    with pytest.raises(ConfigurationError):
        Grid(sphere, [0.5, -1.0], [2.5, 1.0], 64, 0.0, 1.0)


def test_local_box(grid):
    first, last, box = local_box(grid, np.array([1.5, 0.0, 0.0]), np.array([0.8, 0.8, 0.8]))
    assert grid.times[first] <= 0.7 - 2 * grid.dt + 1e-12 and grid.times[last] >= 2.3 + 2 * grid.dt - 1e-12
    assert all(s.start > grid.sponge and s.stop < 65 - grid.sponge for s in box)
    with pytest.raises(DomainError):
        local_box(grid, np.array([0.1, 0.0, 0.0]), np.array([0.8, 0.8, 0.8]))
    with pytest.raises(DomainError):
        local_box(grid, np.array([1.5, 1.5, 0.0]), np.array([0.8, 0.8, 0.8]))


def test_sampled_source(grid):
    source = SampledSource(3, (slice(10, 12), slice(20, 23)), np.ones((4, 2, 3)))
    assert source.last_level == 6
    assert source.covers(6) and not source.covers(7)
    full = source.full(grid)
    assert full.sum() == 24
    assert full[3, 10, 20] == 1.0 and full[7, 10, 20] == 0.0


def test_bump_profile(spec):
    X = np.array([[1.0, 0.0, 0.0], [1.0, 0.5, 0.0], [1.0, 0.8, 0.0]])
    values = bump_profile(spec, X, np.array([1.0, 0.0, 0.0]), 0.8)
    assert values[0] == pytest.approx(1.0)
    assert 0.0 < values[1] < 1.0
    assert values[2] == 0.0


def test_solver_reproduces_a_box_bump(spec, grid):
    term, solution = make_box_bump(spec, grid, Point.of(1.5, 0.0, 0.0), 0.8)
    history = solve_linear(spec, grid, term.samples, Recording(1, solution.box))
    reproduced = history.data[solution.first_level:solution.last_level + 1]
    assert np.max(np.abs(reproduced - solution.values)) <= 1e-9 * solution.sup_norm()
    assert np.max(np.abs(history.final.u)) <= 1e-9


def test_box_bump_radius_checks(spec, grid):
    with pytest.raises(ConfigurationError):
        make_box_bump(spec, grid, Point.of(1.5, 0.0, 0.0), 0.5)
    with pytest.raises(ConfigurationError):
        make_box_bump(spec, grid, Point.of(1.5, 0.0, 0.0), 0.8, h=0.6)


def test_box_g_of_a_plane_wave(spec, grid):
    # the discrete operator annihilates u = t - x1 (linear in t and x)
    first, last, box = 10, 30, (slice(20, 45), slice(20, 45))
    X = box_points(grid, first, last, box)
    u = X[..., 0] - X[..., 1]
    residual = box_g_apply(spec, grid, u, first, box)
    assert np.max(np.abs(residual[1:-1, 1:-1, 1:-1])) <= 1e-9


def test_energy_is_conserved_after_the_forcing(spec):
    grid = Grid.from_config(spec, dict(GRID, time=[0.0, 6.0]), reflecting=True)
    first, last, box = local_box(grid, np.array([1.0, 0.0, 0.0]), np.array([0.6, 0.6, 0.6]))
    source = SampledSource(first, box, bump_profile(spec, box_points(grid, first, last, box), np.array([1.0, 0.0, 0.0]), 0.6))
    history = solve_linear(spec, grid, source, Recording(energy=True))
    assert len(history.energy) == grid.steps
    assert energy_drift(history, source.last_level + 1) <= 1e-8


def test_energy_drift_needs_a_recording(spec, grid):
    history = solve_linear(spec, grid, None)
    with pytest.raises(DomainError):
        energy_drift(history)
    assert history.sup_norm() == 0.0


def test_snapshot_file(tmp_path):
    values = np.arange(24, dtype=float).reshape(2, 3, 4)
    path = tmp_path / "u.wech"
    write_snapshot(str(path), values, time=1.25, level=25)
    assert path.stat().st_size == 64 + 24 * 8
    loaded, header = read_snapshot(str(path))
    np.testing.assert_array_equal(loaded, values)
    assert header["time"] == 1.25 and header["level"] == 25

    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(PreconditionError):
        read_snapshot(str(path))
