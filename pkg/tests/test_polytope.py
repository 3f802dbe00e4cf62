import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlsos import polytope as pt
from mlsos.errors import DegenerateBlock, EmptyRelativeInterior, InconsistentEqualities, TooManyCombinations
from mlsos.lp import LpProblem, solve_lp


def square():
    return pt.HPolytope.box([0.0, 0.0], [1.0, 1.0])


def vset(P):
    return {tuple(np.round(v, 9)) for v in pt.vertices(P).vertices}


def test_normalize_drops_duplicate_equality():
    P = pt.normalize(pt.HPolytope(2, -np.eye(2), [0, 0], [[1, 0], [1, 0]], [1, 1]))
    np.testing.assert_allclose(P.B, [[1, 0]])
    np.testing.assert_allclose(P.b, [1])


def test_normalize_inconsistent():
    with pytest.raises(InconsistentEqualities):
        pt.normalize(pt.HPolytope(2, -np.eye(2), [0, 0], [[1, 0], [1, 0]], [1, 2]))


def test_normalize_square():
    P = pt.normalize(square())
    assert P.normalized
    np.testing.assert_allclose(P.A, square().A)
    assert pt.contains_point(P, P.interior_point)


def test_normalize_degenerate_and_empty_interior():
    with pytest.raises(DegenerateBlock):
        pt.normalize(pt.HPolytope(1, [[1.0]], [1.0], [[1.0]], [0.5]))
    with pytest.raises(EmptyRelativeInterior):
        pt.normalize(pt.HPolytope(1, [[1.0], [-1.0]], [0.0, 0.0]))


def test_is_bounded():
    assert pt.is_bounded(pt.normalize(square()))
    assert not pt.is_bounded(pt.normalize(pt.HPolytope(1, [[-1.0]], [0.0])))
    assert pt.is_bounded(pt.normalize(pt.HPolytope.simplex(3)))


def test_remove_redundant():
    P = pt.normalize(square().with_rows([[1.0, 0.0]], [2.0]))
    assert pt.remove_redundant(P).m == 4
    dup = pt.normalize(square().with_rows([[1.0, 0.0]], [1.0]))
    assert pt.remove_redundant(dup).m == 4
    tri = pt.normalize(pt.HPolytope(2, [[-1, 0], [0, -1], [1, 1]], [0, 0, 1]))
    assert pt.remove_redundant(tri).m == 3


def test_vertices_square():
    assert vset(pt.normalize(square())) == {(0, 0), (1, 0), (0, 1), (1, 1)}


def test_vertices_with_equalities():
    P = pt.normalize(pt.HPolytope(3, -np.eye(3), np.zeros(3), [[1, 1, 1], [-1, -1, 1]], [1, 0]))
    assert vset(P) == {(0.5, 0.0, 0.5), (0.0, 0.5, 0.5)}


def test_vertices_matching_pennies_p1():
    B = np.array([[1.0, 3.0], [3.0, 1.0]])
    P = pt.normalize(pt.HPolytope(2, np.vstack([B.T, -np.eye(2)]), [1, 1, 0, 0]))
    got = sorted(vset(P))
    expected = sorted({(0, 0), (round(1 / 3, 9), 0), (0, round(1 / 3, 9)), (0.25, 0.25)})
    assert got == expected


def test_vertex_cap():
    with pytest.raises(TooManyCombinations):
        pt.vertices(pt.normalize(square()), cap=3)


def test_degenerate_flag():
    # apex of a square pyramid has four tight rows in dimension three
    A = [[0, 0, -1], [1, 0, 1], [-1, 0, 1], [0, 1, 1], [0, -1, 1]]
    P = pt.normalize(pt.HPolytope(3, A, [0, 1, 1, 1, 1]))
    vs = pt.vertices(P)
    apex = [i for i, v in enumerate(vs.vertices) if np.allclose(v, [0, 0, 1])]
    assert len(apex) == 1 and vs.degenerate[apex[0]]
    assert sum(vs.degenerate) == 1


@pytest.mark.parametrize("x, inside", [((0.5, 0.5), True), ((1 + 1e-9, 0.0), True), ((2.0, 0.0), False)])
def test_contains_point(x, inside):
    assert pt.contains_point(square(), np.array(x), 1e-8) is inside


def _random_polytope(seed, d):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(d + 1, 3 * d + 3))
    W = rng.standard_normal((k, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    box = pt.HPolytope.box(-np.ones(d), np.ones(d))
    return pt.normalize(pt.HPolytope(d, np.vstack([box.A, W]), np.concatenate([box.a, rng.uniform(0.2, 1.2, k)]))), rng


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_vertex_invariants_and_lp_cross_oracle(seed, d):
    P, rng = _random_polytope(seed, d)
    vs = pt.vertices(P)
    for v, act in zip(vs.vertices, vs.active_sets):
        assert pt.contains_point(P, v, 1e-8)
        assert np.linalg.matrix_rank(P.A[list(act)]) == d
    assert vset(P) == vset(pt.remove_redundant(P))
    c = rng.standard_normal(d)
    r = solve_lp(LpProblem(c=-c, G=P.A, g=P.a))
    assert (vs.vertices @ c).max() == pytest.approx(-r.value, abs=1e-7)


def test_maximize_linear_returns_vertex():
    r = pt.maximize_linear(pt.normalize(square()), np.array([1.0, 0.0]))
    assert r.value == pytest.approx(1.0)
    assert tuple(np.round(r.point, 9)) in {(1, 0), (1, 1)}


def test_project_l1():
    x = pt.project_l1(pt.normalize(square()), np.array([1.5, -0.25]))
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-9)
