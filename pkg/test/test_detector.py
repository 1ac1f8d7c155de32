import numpy as np
import pytest

from detector.boomerang import boomerang_test, nearby_point
from detector.pipeline import DetectionSettings, product_trace
from detector.singularity import band_energy, detect_trace_singularities, precision_recall, refinement_consistent
from geometry.covector import null_covector
from geometry.metric import Point
from geometry.observer import AffineCurve
from metrics.minkowski import Minkowski
from solver.grid import Grid
from solver.trace import TraceSeries
from sources.source import make_box_bump
from util.errors import ConfigurationError, DomainError, PreconditionError


def burst_trace(burst_time=6.0, freq=4.0, samples=2001, amplitude=1.0):
    r = np.linspace(-1.0, 1.0, samples)
    times = 5.0 + 4.0 * r
    background = 0.5 * np.sin(0.3 * times)
    burst = amplitude * np.exp(-((times - burst_time) / 0.15) ** 2) * np.cos(2 * np.pi * freq * times)
    return TraceSeries(r, background + burst, times, label="burst")


def test_detects_a_burst():
    report = detect_trace_singularities(burst_trace(), (2.0, 8.0), floor=1e-4)
    assert len(report.locations) == 1
    assert report.locations[0] == pytest.approx(0.25, abs=0.02)
    assert report.scores[0] > 6.0


def test_floor_suppresses_detections():
    report = detect_trace_singularities(burst_trace(amplitude=0.0), (2.0, 8.0), floor=1e-3)
    assert report.locations == []


def test_band_energy_checks_the_sampling():
    with pytest.raises(ConfigurationError):
        band_energy(burst_trace(samples=101), (2.0, 8.0))
    with pytest.raises(ConfigurationError):
        band_energy(burst_trace(), (8.0, 2.0))


def test_score_curve_file(tmp_path):
    report = detect_trace_singularities(burst_trace(), (2.0, 8.0), floor=1e-4)
    report.write_scores(str(tmp_path / "scores.csv"))
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "r,energy"
    assert len(lines) == 2002


def test_refinement_consistency():
    coarse = detect_trace_singularities(burst_trace(), (2.0, 8.0), floor=1e-4)
    fine = detect_trace_singularities(burst_trace(samples=4001), (2.0, 8.0), floor=1e-4)
    shifted = detect_trace_singularities(burst_trace(burst_time=7.0), (2.0, 8.0), floor=1e-4)
    assert refinement_consistent([coarse, fine])
    assert refinement_consistent([coarse, fine], r=0.25, tolerance=0.02)
    assert not refinement_consistent([coarse, shifted])
    assert not refinement_consistent([])


def test_precision_recall():
    assert precision_recall([0.1, 0.5, 0.9], [0.11, 0.52], 0.03) == (2, 1, 0)
    assert precision_recall([], [0.2], 0.1) == (0, 0, 1)
    # one detection matches at most one expected location
    assert precision_recall([0.5], [0.49, 0.51], 0.05) == (1, 0, 1)


def test_trace_combination():
    a = burst_trace()
    b = burst_trace(burst_time=7.0)
    np.testing.assert_allclose(a.combine(b, -1.0).values, a.values - b.values)
    assert a.scaled(2.0).sup_norm() == pytest.approx(2 * a.sup_norm())
    with pytest.raises(DomainError):
        a.combine(burst_trace(samples=11))


@pytest.mark.parametrize("change", [{"a": 0.4}, {"band": [1.5, 2.0]}, {"method": "richardson"}, {"refinements": []}])
def test_detection_settings_check(change):
    with pytest.raises(ConfigurationError):
        DetectionSettings(**change).check()


def test_detection_settings_from_config():
    settings = DetectionSettings.from_dict({"h": 0.5, "a": 0.35, "freq": 1.5})
    settings.check()
    assert settings.band_for(settings.freq) == (0.75, 3.0)
    assert settings.method == "cascade"


def test_boomerang_preconditions(minkowski, time_axis):
    grid = Grid(minkowski, [-3.0, -3.0], [3.0, 3.0], 64, 0.0, 8.0)
    x1 = Point.of(2.0, -1.0, 0.0)
    xi1 = null_covector(minkowski, x1, [1.0, 0.0])
    with pytest.raises(PreconditionError):
        boomerang_test(minkowski, grid, time_axis, xi1, xi1)
    past = null_covector(minkowski, Point.of(1.0, -1.0, 0.0), [1.0, 0.0])
    with pytest.raises(PreconditionError):
        boomerang_test(minkowski, grid, time_axis, past, xi1)


def test_nearby_point(minkowski, rng):
    x0 = Point.of(3.0, 0.5, -0.5)
    points = [nearby_point(minkowski, x0, 0.1, rng) for _ in range(5)]
    for x in points:
        assert minkowski.distance_G(x.coords, x0.coords) == pytest.approx(0.1)
        assert x.t == x0.t
    assert len({tuple(x.coords) for x in points}) == 5
    assert nearby_point(minkowski, x0, 0.0, rng) is x0
    again = nearby_point(minkowski, x0, 0.1, np.random.default_rng(7))
    np.testing.assert_allclose(again.coords, points[0].coords)
    with pytest.raises(DomainError):
        nearby_point(minkowski, x0, 20.0, rng)


def test_detection_offset_is_checked():
    with pytest.raises(ConfigurationError):
        DetectionSettings(offset=1.0).check()
    DetectionSettings(offset=0.0).check()


def test_product_trace_by_cascade_and_stencil():
    spec = Minkowski(2, [-1.0, -5.0, -5.0], [12.0, 5.0, 5.0])
    grid = Grid(spec, [-4.0, -4.0], [4.0, 4.0], 64, 0.0, 3.0)
    curve = AffineCurve([1.5, 0.5, 0.0], [1.4, 0.0, 0.0])
    centers = [(1.5, 0.0, 0.0), (1.6, 0.1, 0.0), (1.5, 0.0, -0.1)]
    sources = {j: make_box_bump(spec, grid, Point(c), a)[0].samples for j, (c, a) in enumerate(zip(centers, (0.8, 0.9, 1.0)))}

    direct, direct_scale = product_trace(spec, grid, curve, sources, (2, 0, 1), DetectionSettings())
    stencil, stencil_scale = product_trace(spec, grid, curve, sources, (0, 1, 2), DetectionSettings(method="stencil"))
    assert direct_scale == pytest.approx(stencil_scale, rel=1e-6)
    np.testing.assert_allclose(stencil.r, direct.r)
    peak = np.max(np.abs(direct.values))
    assert peak > 0
    assert np.max(np.abs(stencil.values - direct.values)) <= 5e-2 * peak
