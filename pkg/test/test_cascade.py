import numpy as np
import pytest

from geometry.metric import Point
from metrics.minkowski import Minkowski
from solver.cascade import U_SINGULAR, V_SINGULAR, CascadePlan, amplitude_eps, assemble_cascade_rhs, epsilon_stencil, \
    expansion, key_of, solve_cascade
from solver.grid import Grid
from sources.source import make_box_bump
from util.errors import DependencyError, PreconditionError


def test_key_of():
    assert key_of([3, 1, 2]) == (1, 2, 3)
    with pytest.raises(PreconditionError):
        key_of([1, 1])


def test_expansion_of_three_indices():
    assert expansion((0, 1, 2)) == {((0,), (1,), (2,)): -6}


def test_expansion_of_five_indices():
    terms = expansion((0, 1, 2, 3, 4))
    assert len(terms) == 10
    assert set(terms.values()) == {-6}
    assert all(sorted(len(b) for b in p) == [1, 1, 3] for p in terms)


def test_even_index_sets_vanish():
    assert expansion((0, 1, 2, 3)) == {}


def test_seven_index_plan():
    plan = CascadePlan.build(range(7))
    assert plan.order[0] == (0,)
    assert plan.order[-1] == (0, 1, 2, 3, 4, 5, 6)
    assert all(len(key) % 2 == 1 for key in plan.order)
    # every field is solved after the fields of its right-hand side
    position = {key: i for i, key in enumerate(plan.order)}
    for key, terms in plan.terms.items():
        for partition in terms:
            assert all(position[block] < position[key] for block in partition)


def test_split_into_regular_and_singular():
    full = CascadePlan.build(range(7))
    regular, singular = full.split(U_SINGULAR)
    top = full.indices
    assert set(singular.terms[top]) == {U_SINGULAR}
    assert U_SINGULAR not in regular.terms[top]
    assert len(regular.terms[top]) + 1 == len(full.terms[top])
    assert "u_0123456" in full.multiplicities()


def test_unknown_partition():
    with pytest.raises(PreconditionError):
        CascadePlan.build(range(5), include=[U_SINGULAR])
    assert set(CascadePlan.build(range(5), include=[V_SINGULAR]).terms[(0, 1, 2, 3, 4)]) == {V_SINGULAR}


def test_assemble_rhs():
    fields = {(0,): np.full(3, 2.0), (1,): np.full(3, 3.0), (2,): np.array([1.0, 0.0, -1.0])}
    np.testing.assert_allclose(assemble_cascade_rhs((0, 1, 2), fields), [-36.0, 0.0, 36.0])
    with pytest.raises(DependencyError):
        assemble_cascade_rhs((0, 1, 2), {(0,): fields[(0,)]})
    with pytest.raises(DependencyError):
        assemble_cascade_rhs((4,), fields, sources={0: np.zeros(3)})


@pytest.fixture
def interacting_bumps():
    spec = Minkowski(2, [-1.0, -5.0, -5.0], [12.0, 5.0, 5.0])
    grid = Grid(spec, [-4.0, -4.0], [4.0, 4.0], 64, 0.0, 3.0)
    centers = [(1.5, 0.0, 0.0), (1.6, 0.1, 0.0), (1.5, 0.0, -0.1)]
    sources = {j: make_box_bump(spec, grid, Point(c), a)[0].samples for j, (c, a) in enumerate(zip(centers, (0.8, 0.9, 1.0)))}
    return spec, grid, sources


def test_cascade_needs_every_source(interacting_bumps):
    spec, grid, sources = interacting_bumps
    with pytest.raises(DependencyError):
        solve_cascade(spec, grid, {0: sources[0]}, CascadePlan.build((0, 1, 2)))


def test_cascade_of_three_fields(interacting_bumps):
    spec, grid, sources = interacting_bumps
    result = solve_cascade(spec, grid, sources, CascadePlan.build((0, 1, 2)))
    assert set(result.finals) == {(0,), (1,), (2,), (0, 1, 2)}
    assert result.histories[(0, 1, 2)].metadata == {"label": "u_012"}
    assert np.all(np.isfinite(result.top))
    assert np.max(np.abs(result.top)) > 0
    # the first-order fields reproduce the bumps
    assert 0.9 <= result.histories[(0,)].sup_norm() <= 1.0 + 1e-9


def test_cascade_matches_the_eps_stencil(interacting_bumps):
    spec, grid, sources = interacting_bumps
    direct = solve_cascade(spec, grid, sources, CascadePlan.build((0, 1, 2))).top
    eps = amplitude_eps(spec, grid, sources, (0, 1, 2))
    stencil = epsilon_stencil(spec, grid, sources, (0, 1, 2), eps, jobs=1)
    assert stencil.corners == 8
    scale = np.max(np.abs(direct))
    assert scale > 0
    assert np.max(np.abs(stencil.final - direct)) <= 1e-2 * scale
