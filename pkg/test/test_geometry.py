import numpy as np
import pytest

from geometry.causal import CAUSAL_ONLY, CHRONOLOGICAL, NOT_CAUSAL, causal_relation, cut_function, time_separation
from geometry.covector import FUTURE, LIGHTLIKE, SPACELIKE, TIMELIKE, classify, covector, hamiltonian, normalize, null_covector, \
    sphere_directions
from geometry.flow import BACKWARD, FORWARD, distance_to_trajectory, flow, flowout, write_trajectory
from geometry.metric import Point, Tolerances, metric_at
from geometry.observer import decompose_nu, earliest_observation, fan_minima
from util.errors import ConfigurationError, DomainError, PreconditionError


def test_metric_at_minkowski(minkowski):
    g, g_inverse, volume = metric_at(minkowski, Point.of(0.0, 0.0, 0.0))
    np.testing.assert_allclose(g, np.diag([-1.0, 1.0, 1.0]))
    np.testing.assert_allclose(g_inverse, np.diag([-1.0, 1.0, 1.0]))
    assert volume == pytest.approx(1.0)


def test_metric_at_outside_chart(minkowski):
    with pytest.raises(DomainError):
        metric_at(minkowski, Point.of(0.0, 5.0, 0.0))


def test_point_rejects_non_finite():
    with pytest.raises(DomainError):
        Point.of(0.0, float("nan"), 0.0)


def test_null_covector_is_normalized(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [3.0, 4.0])
    np.testing.assert_allclose(xi.xi, [-1.0, 0.6, 0.8])
    assert xi.causal_type == LIGHTLIKE
    assert xi.time_orientation == FUTURE


@pytest.mark.parametrize("components, expected", [
    ([-1.0, 0.0, 0.0], TIMELIKE),
    ([0.0, 1.0, 0.0], SPACELIKE),
    ([-1.0, 1.0, 0.0], LIGHTLIKE),
])
def test_classify(minkowski, components, expected):
    causal_type, _, _ = classify(minkowski, Point.of(0.0, 0.0, 0.0), np.array(components))
    assert causal_type == expected


def test_normalize_keeps_the_ray(minkowski):
    xi = covector(minkowski, Point.of(0.0, 0.0, 0.0), [-3.0, 0.0, 3.0])
    np.testing.assert_allclose(normalize(minkowski, xi).xi, [-1.0, 0.0, 1.0])


def test_flow_is_a_straight_line_in_minkowski(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [1.0, 0.0])
    curve = flow(minkowski, xi, 1.0)
    np.testing.assert_allclose(curve.end, [2.0, 2.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(curve.Xi[-1], xi.xi, atol=1e-9)
    assert curve.null_residual <= 1e-10
    assert not curve.exited


def test_flow_rejects_timelike_covector(minkowski):
    xi = covector(minkowski, Point.of(0.0, 0.0, 0.0), [-1.0, 0.0, 0.0])
    with pytest.raises(PreconditionError):
        flow(minkowski, xi, 1.0)


def test_flow_is_reversible(minkowski, rng):
    base = Point.of(1.0, 0.3, -0.2)
    xi = null_covector(minkowski, base, rng.normal(size=2))
    forward = flow(minkowski, xi, 1.5, FORWARD)
    back = flow(minkowski, forward.covector_at(minkowski, forward.s_max), forward.s_max, BACKWARD)
    np.testing.assert_allclose(back.end, base.coords, atol=1e-9)


def test_flow_stops_at_the_chart_boundary(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [1.0, 0.0])
    curve = flow(minkowski, xi, 50.0)
    assert curve.exited
    assert curve.end[1] == pytest.approx(4.0, abs=1e-6)
    assert curve.s_max == pytest.approx(2.0, abs=1e-6)


def test_null_residual_stays_small_on_a_bump(rng):
    from metrics.preset import load_metric

    spec = load_metric({"preset": "bump-perturbed", "dimension": 2, "parameter": {"amplitude": 0.3, "width": 0.7}})
    xi = null_covector(spec, Point.of(0.0, -1.0, 0.2), [1.0, 0.1])
    curve = flow(spec, xi, 10.0)
    assert curve.null_residual <= 1e-8


def test_flow_exit_lies_on_the_chart_box(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 3.7, 0.2), [1.0, 0.37])
    curve = flow(minkowski, xi, 50.0)
    assert curve.exited
    assert curve.end[1] == pytest.approx(4.0, abs=1e-12)
    assert minkowski.boundary_distance(curve.end) >= 0.0
    assert np.all(minkowski.inside(curve.X))


def test_null_residual_over_a_long_flow_on_the_sphere(sphere):
    xi = null_covector(sphere, Point.of(-0.5, np.pi / 2, 0.0), [0.3, 1.0])
    curve = flow(sphere, xi, 50.0)
    # dt/ds = 2 until the curve leaves through t = 12, after two turns around the equator
    assert curve.exited
    assert curve.s_max == pytest.approx(6.25, abs=1e-6)
    assert curve.null_residual <= Tolerances().flow
    assert not curve.flags
    drift = np.abs(hamiltonian(sphere, curve.X, curve.Xi)) / np.sum(curve.Xi * curve.Xi, axis=-1)
    assert np.max(drift) <= 1e-12


def test_flowout_moves_to_the_future(minkowski):
    base = Point.of(0.0, 0.0, 0.0)
    seeds = [null_covector(minkowski, base, d, future) for d, future in (([1.0, 0.0], True), ([0.0, 1.0], False))]
    for curve in flowout(minkowski, seeds, FORWARD, 1.0):
        assert curve.end[0] > 0.0


def test_distance_to_trajectory(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [1.0, 0.0])
    curve = flow(minkowski, xi, 2.0)
    distance, s = distance_to_trajectory(minkowski, curve, np.array([1.0, 1.0, 0.5]))
    assert distance == pytest.approx(0.5, abs=1e-9)
    assert s == pytest.approx(0.5, abs=1e-6)


def test_write_trajectory(minkowski, tmp_path):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [1.0, 0.0])
    filename = tmp_path / "line.csv"
    write_trajectory(minkowski, flow(minkowski, xi, 1.0), str(filename))
    header = filename.read_text().splitlines()[0]
    assert header.split(",") == ["s", "t", "x1", "x2", "xi_t", "xi_1", "xi_2", "p_residual"]


def test_time_separation_timelike(minkowski):
    tau = time_separation(minkowski, Point.of(0.0, 0.0, 0.0), Point.of(2.0, 1.0, 0.0))
    assert tau.value == pytest.approx(np.sqrt(3.0), rel=1e-4)


def test_time_separation_spacelike(minkowski):
    assert time_separation(minkowski, Point.of(0.0, 0.0, 0.0), Point.of(1.0, 2.0, 0.0)).value == 0.0


@pytest.mark.parametrize("offset, expected", [
    ((1.0, 0.0), CHRONOLOGICAL),
    ((1.0, 1.0), CAUSAL_ONLY),
    ((1.0, 2.0), NOT_CAUSAL),
    ((-1.0, 0.0), NOT_CAUSAL),
])
def test_causal_relation(minkowski, offset, expected):
    p = Point.of(1.0, 0.0, 0.0)
    q = Point.of(1.0 + offset[0], offset[1], 0.0)
    assert causal_relation(minkowski, p, q) == expected


def test_no_cut_point_in_minkowski(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 0.0, 0.0), [1.0, 0.0])
    cut = cut_function(minkowski, xi)
    assert not cut.cut_found
    assert cut.rho == pytest.approx(cut.s_limit)


def test_cut_function_up_to_an_oblique_exit(minkowski):
    xi = null_covector(minkowski, Point.of(0.0, 3.7, 0.2), [1.0, 0.37])
    cut = cut_function(minkowski, xi)
    assert not cut.cut_found
    assert cut.rho == pytest.approx(cut.s_limit)
    assert not cut.flags


@pytest.mark.slow
def test_cut_point_at_the_antipode(sphere):
    xi = null_covector(sphere, Point.of(0.0, np.pi / 2, 0.0), [0.0, 1.0])
    cut = cut_function(sphere, xi)
    assert cut.cut_found
    # dt/ds = 2, the antipode is at chart time pi R
    assert 2 * cut.rho == pytest.approx(np.pi * sphere.radius, abs=1e-3)


def test_earliest_observation(minkowski, time_axis):
    observation = earliest_observation(minkowski, time_axis, Point.of(1.0, 1.0, 0.0))
    np.testing.assert_allclose(observation.xhat.coords, [2.0, 0.0, 0.0], atol=1e-6)
    assert observation.r == pytest.approx(-0.75, abs=1e-6)
    np.testing.assert_allclose(observation.xi_mu.xi, [-1.0, -1.0, 0.0], atol=1e-6)
    assert not observation.flagged


def test_fan_minima_in_the_plane():
    fan = sphere_directions(2, 72)
    angles = np.arctan2(fan[:, 1], fan[:, 0])
    starts = fan_minima(fan, 1.0 + np.cos(6 * angles))
    assert sorted(starts.tolist()) == [6, 18, 30, 42, 54, 66]


def test_fan_minima_on_the_sphere():
    fan = sphere_directions(3, 200)
    misses = np.sqrt(2.0 - 2.0 * np.abs(fan[:, 2]))
    starts = fan_minima(fan, misses)
    assert set(starts[:2].tolist()) == {0, 199}
    assert np.all(np.diff(misses[starts]) >= 0)


def test_earliest_observation_on_the_curve(minkowski, time_axis):
    with pytest.raises(PreconditionError):
        earliest_observation(minkowski, time_axis, Point.of(3.0, 0.0, 0.0))


def test_decompose_nu(minkowski):
    base = Point.of(0.0, 0.0, 0.0)
    c, rest = decompose_nu(minkowski, covector(minkowski, base, [-1.0, 1.0, 0.0]), covector(minkowski, base, [-1.0, -1.0, 0.0]))
    assert c == pytest.approx(1.0)
    np.testing.assert_allclose(rest.xi, [0.0, -2.0, 0.0])


def test_tolerance_overrides():
    assert Tolerances().with_overrides({"meet": 1e-4}).meet == 1e-4
    with pytest.raises(ConfigurationError):
        Tolerances().with_overrides({"null": 1.0})
    with pytest.raises(ConfigurationError):
        Tolerances().with_overrides({"unknown": 1.0})
