import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsmg.lp import LinearProgram, LpDimensionError, max_over_simplex, solve_lp


def vertex_oracle(c, A, b):
    """max c @ x over {A x <= b, x >= 0} by enumerating basic solutions.

    Only valid when the feasible set is bounded.
    """
    n = len(c)
    G = np.vstack([A, -np.eye(n)])
    h = np.r_[b, np.zeros(n)]
    best = None
    for rows in itertools.combinations(range(len(G)), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-8):
            v = c @ x
            best = v if best is None else max(best, v)
    return best


def test_single_bound():
    sol = solve_lp(LinearProgram([1.0], [[1.0]], [3.0]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(3.0)


def test_unbounded():
    assert solve_lp(LinearProgram([1.0, 0.0], [[0.0, 1.0]], [1.0])).status == "unbounded"


def test_infeasible():
    lp = LinearProgram([1.0], [[1.0], [1.0]], [1.0, 2.0], senses=["<=", ">="])
    assert solve_lp(lp).status == "infeasible"


def test_free_variable_maximin():
    # row player of [[1, -1], [-1, 2]]: value 1/5 at x = (0.6, 0.4)
    M = np.array([[1.0, -1.0], [-1.0, 2.0]])
    lp = LinearProgram(
        [0, 0, 1.0],
        np.hstack([-M.T, np.ones((2, 1))]),
        [0.0, 0.0],
        A_eq=[[1.0, 1.0, 0.0]],
        b_eq=[1.0],
        lower=[0, 0, -np.inf],
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.point, [0.6, 0.4, 0.2], atol=1e-12)


def test_redundant_equalities():
    lp = LinearProgram([1.0, 2.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0])
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(2.0)


def test_dimension_errors():
    with pytest.raises(LpDimensionError):
        LinearProgram([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(LpDimensionError):
        LinearProgram([1.0], [[1.0]], [1.0, 2.0])
    with pytest.raises(LpDimensionError):
        LinearProgram([1.0], [[1.0]], [1.0], senses=["=="])


@settings(max_examples=150, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(-5, 5), min_size=n, max_size=n),
            st.lists(st.lists(st.floats(0.1, 5), min_size=n, max_size=n), min_size=1, max_size=4),
            st.lists(st.floats(0.5, 5), min_size=4, max_size=4),
        )
    )
)
def test_matches_vertex_enumeration(data):
    c, A, b = data
    A = np.array(A)
    b = np.array(b[: len(A)])
    # positive rows keep the polytope bounded
    sol = solve_lp(LinearProgram(c, A, b))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(vertex_oracle(np.array(c), A, b), abs=1e-8)
    assert np.all(A @ sol.point <= b + 1e-8) and np.all(sol.point >= 0)


# coefficients on a 0.1 lattice: both paths are exact only up to FEAS_TOL, so keep
# instances away from constraints that hold with ~1e-9 slack
coef = st.integers(-30, 30).map(lambda v: v / 10)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            st.lists(coef, min_size=n, max_size=n),
            st.lists(st.lists(coef, min_size=n, max_size=n), max_size=6),
        )
    )
)
def test_simplex_vertex_path_agrees_with_tableau(data):
    c, G = data
    n = len(c)
    G = np.array(G).reshape(-1, n)
    fast = max_over_simplex(c, G)
    lp = LinearProgram(c, G, np.zeros(len(G)), A_eq=np.ones((1, n)), b_eq=[1.0])
    slow = solve_lp(lp)
    assert (fast is None) == (slow.status == "infeasible")
    if fast is not None:
        assert fast[1] == pytest.approx(slow.value, abs=1e-8)
        assert abs(fast[0].sum() - 1) < 1e-12 and np.all(fast[0] >= 0)
