import numpy as np
import pytest

from geometry.covector import null_covector
from geometry.metric import Point
from scattering.generator import R1_FALSE, R2, SPAN_FALSE, generate_quadruples, quadruple_from_dict, shifted, \
    span_null_covector, witness_quadruple
from scattering.interaction import interaction_curve
from scattering.oracle import non_return_check, oracle_r1, oracle_r2
from scattering.relation import build_relation
from scattering.span import lightcone_span_adjust, span_check
from util.errors import PreconditionError

MINKOWSKI_4 = np.diag([-1.0, 1.0, 1.0, 1.0])
E1 = np.array([-1.0, 1.0, 0.0, 0.0])
E2 = np.array([-1.0, 0.0, 1.0, 0.0])
E3 = np.array([-1.0, 0.0, 0.0, 1.0])


def test_span_check():
    inside = span_check([E1 + 2 * E2 - E3, E1, E2, E3])
    assert inside.holds
    np.testing.assert_allclose(inside.coefficients, [1.0, 2.0, -1.0])
    outside = span_check([np.array([-1.0, -1.0, 0.0, 0.0]), E1, E2, E3])
    assert outside.holds is False
    assert outside.residual > 0.1


def test_span_check_degenerate_basis():
    result = span_check([E1, E1, E2, 2 * E1])
    assert result.holds is None
    assert result.flags


def test_span_check_always_holds_in_two_space_dimensions():
    etas = [np.array([-1.0, 0.6, 0.8]), np.array([-1.0, 1.0, 0.0]), np.array([-1.0, 0.0, 1.0]), np.array([-1.0, -1.0, 0.0])]
    assert span_check(etas).holds


def test_span_check_wants_four_covectors():
    with pytest.raises(PreconditionError):
        span_check([E1, E2, E3])


def test_span_check_wants_a_common_point(minkowski3):
    a = null_covector(minkowski3, Point.of(0.0, 0.0, 0.0, 0.0), [1.0, 0.0, 0.0])
    b = null_covector(minkowski3, Point.of(0.0, 1.0, 0.0, 0.0), [0.0, 1.0, 0.0])
    with pytest.raises(PreconditionError):
        span_check([a, a, b, b], spec=minkowski3)


def test_span_adjustment_round_trip():
    xi0 = span_null_covector_components(0.7)
    adjustment = lightcone_span_adjust(MINKOWSKI_4, xi0, E1, E2, E3)
    np.testing.assert_allclose(adjustment.xi1, E1, atol=1e-10)
    assert adjustment.theta == pytest.approx(0.0, abs=1e-10)


def test_span_adjustment_of_a_perturbation():
    xi0 = span_null_covector_components(0.7) + 1e-4 * np.array([0.3, -0.5, 0.2, 0.8])
    adjustment = lightcone_span_adjust(MINKOWSKI_4, xi0, E1, E2, E3)
    assert adjustment.residual <= 1e-10
    assert span_check([xi0, adjustment.xi1, E2, E3]).holds
    assert np.linalg.norm(adjustment.xi1 - E1) < 1e-2


def test_span_adjustment_preconditions():
    with pytest.raises(PreconditionError):
        lightcone_span_adjust(MINKOWSKI_4, E2 + E3, E1, E2, E3)
    with pytest.raises(PreconditionError):
        lightcone_span_adjust(MINKOWSKI_4, E1, np.array([-1.0, 0.0, 0.0, 0.0]), E2, E3)


def span_null_covector_components(mix: float) -> np.ndarray:
    # b solves the cone equation of E1 + b E2 + mix E3 (pairings of distinct E_j are -1)
    b = -mix / (1.0 + mix)
    return E1 + b * E2 + mix * E3


def test_span_null_covector(minkowski3):
    y = Point.of(2.0, 0.0, 0.0, 0.0)
    etas = [null_covector(minkowski3, y, e[1:]) for e in (E1, E2, E3)]
    eta0 = span_null_covector(minkowski3, y, etas, 0.7)
    assert eta0.lightlike and eta0.future
    assert eta0.xi[0] == pytest.approx(-1.0)
    assert span_check([eta0] + etas).holds


@pytest.fixture
def quadruple(minkowski):
    y = Point.of(3.0, 0.0, 0.0)
    etas = [null_covector(minkowski, y, d) for d in ([1.0, 0.0], [0.0, 1.0], [-1.0, -1.0])]
    eta0 = null_covector(minkowski, y, [1.0, 1.0])
    return witness_quadruple(minkowski, y, eta0, etas, [0.5, 0.8, 0.8, 0.8])


def test_witness_quadruple(minkowski, quadruple):
    assert quadruple.kind == R2
    assert quadruple.quad[0].x[0] == pytest.approx(3.5)
    assert all(xi.x[0] == pytest.approx(2.2) for xi in quadruple.quad[1:])
    assert all(xi.lightlike and xi.future for xi in quadruple.quad)
    restored = quadruple_from_dict(minkowski, quadruple.to_dict()["quad"])
    np.testing.assert_allclose(restored[2].xi, quadruple.quad[2].xi)


def test_meeting_of_a_witness_quadruple(minkowski, quadruple):
    meeting = oracle_r1(minkowski, quadruple.quad)
    assert meeting.holds
    np.testing.assert_allclose(meeting.witness, [3.0, 0.0, 0.0], atol=1e-6)


def test_shifted_quadruple_misses(minkowski, quadruple):
    moved = shifted(minkowski, quadruple.quad, 0, [0.0, 1.0])
    assert oracle_r1(minkowski, moved).holds is False
    assert oracle_r2(minkowski, moved).r2 is False


def test_witness_quadruple_satisfies_r2(minkowski, quadruple):
    verdict = oracle_r2(minkowski, quadruple.quad)
    assert verdict.r1 and verdict.distinct and verdict.before_cut
    assert verdict.r2


def test_non_return(minkowski, time_axis, quadruple):
    holds, margins = non_return_check(minkowski, time_axis, quadruple.quad)
    assert holds
    assert set(margins) == {"xhat-xi0", "x0-xi1", "x0-xi2", "x0-xi3"}
    assert min(margins.values()) > 0.1


def test_non_return_fails_on_a_ray_through_x0(minkowski, time_axis, quadruple):
    x0 = quadruple.quad[0].x
    through = null_covector(minkowski, Point(x0 - np.array([0.5, 0.5, 0.0])), [1.0, 0.0])
    quad = [quadruple.quad[0], through] + quadruple.quad[2:]
    holds, margins = non_return_check(minkowski, time_axis, quad)
    assert holds is False
    assert margins["x0-xi1"] <= 1e-6


def test_relation_without_a_grid(minkowski, time_axis, quadruple):
    moved = shifted(minkowski, quadruple.quad, 1, [0.0, 0.5])
    meeting, missing = build_relation(minkowski, time_axis, [quadruple.quad, moved])
    assert meeting.chronological and meeting.r1 and meeting.r2 and meeting.non_return
    assert missing.chronological
    assert missing.r1 is False and missing.r2 is False
    assert meeting.pipeline is None and missing.pipeline is None
    for verdict in (meeting, missing):
        assert verdict.r2 is not True or verdict.r1 is True
        assert "r2 without r1" not in verdict.flags


def test_generate_quadruples(minkowski):
    region = ([3.0, -1.0, -1.0], [5.0, 1.0, 1.0])
    generated = generate_quadruples(minkowski, 3, region, seed=5, kind=R1_FALSE)
    assert len(generated) == 3
    assert all(g.kind == R1_FALSE and g.flags for g in generated)
    again = generate_quadruples(minkowski, 3, region, seed=5, kind=R1_FALSE)
    np.testing.assert_allclose(again[1].quad[0].xi, generated[1].quad[0].xi)


def test_generator_kinds(minkowski):
    region = ([3.0, -1.0, -1.0], [5.0, 1.0, 1.0])
    with pytest.raises(PreconditionError):
        generate_quadruples(minkowski, 1, region, kind="r3")
    with pytest.raises(PreconditionError):
        generate_quadruples(minkowski, 1, region, kind=SPAN_FALSE)


def test_interaction_curve_needs_three_space_dimensions(minkowski, quadruple):
    with pytest.raises(PreconditionError):
        interaction_curve(minkowski, *quadruple.quad[1:], [3.0, 0.0, 0.0])


@pytest.mark.slow
def test_interaction_curve(minkowski3):
    y = Point.of(3.0, 0.0, 0.0, 0.0)
    etas = [null_covector(minkowski3, y, e[1:]) for e in (E1, E2, E3)]
    eta0 = span_null_covector(minkowski3, y, etas, 0.7)
    generated = witness_quadruple(minkowski3, y, eta0, etas, [0.5, 1.0, 1.0, 1.0])
    curve = interaction_curve(minkowski3, *generated.quad[1:], y.coords, seeds=generated.sigmas[1:])
    assert len(curve.points) >= 3
    assert np.all(curve.spacelike)
    assert np.all(curve.ranks == 3)
    assert np.nanmax(curve.annihilation) <= 1e-6
