"""Exact solvers for one-shot (Bayesian) bimatrix games."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .game import StageGame
from .lp import FEAS_TOL, VERTEX_CAP, LinearProgram, max_over_simplex, simplex_vertex_count, solve_lp

OPT_TOL = 1e-7
TIE_TOL = 1e-9
NASH_MAX_ACTIONS = 8
NASH_REGRET_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SseSolution:
    x: np.ndarray
    responses: tuple[int, ...]
    v_leader: float
    v_followers: tuple[float, ...]


class GameSizeError(ValueError):
    pass


def _simplex_clean(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return x / x.sum()


def best_response(follower_matrix, x) -> tuple[int, tuple[int, ...]]:
    """Follower's pure best response to leader strategy ``x``.

    Returns the smallest maximiser and the full tie set (columns within 1e-9
    of the best expected payoff).
    """
    F = np.asarray(follower_matrix, dtype=float)
    x = np.asarray(x, dtype=float)
    if F.ndim != 2 or F.shape[0] != x.size:
        raise ValueError(f"matrix shape {F.shape} does not match strategy of length {x.size}")
    values = x @ F
    ties = np.flatnonzero(values >= values.max() - TIE_TOL)
    return int(ties[0]), tuple(int(j) for j in ties)


def _can_best_respond(F: np.ndarray, j: int) -> bool:
    """Is column j a best response to some leader mixed strategy?"""
    pure_best = F.max(axis=1)
    if np.any(F[:, j] >= pure_best - FEAS_TOL):
        return True
    # one rival column: x @ (F_j - F_k) peaks at a vertex, so the row check is exact
    if F.shape[1] == 2:
        return False
    n = F.shape[0]
    rows = np.delete(F, j, axis=1).T - F[:, j]
    return _simplex_lp(np.zeros(n), rows) is not None


def _simplex_lp(c: np.ndarray, rows: np.ndarray):
    """max c @ x over the simplex cut by rows @ x <= 0; (x, value) or None."""
    n = c.size
    if simplex_vertex_count(n, len(rows)) <= VERTEX_CAP:
        return max_over_simplex(c, rows)
    lp = LinearProgram(c, rows, np.zeros(len(rows)), A_eq=np.ones((1, n)), b_eq=[1.0])
    sol = solve_lp(lp)
    if sol.status != "optimal":
        return None
    return _simplex_clean(sol.point), sol.value


def _incentive_rows(F: np.ndarray, j: int) -> np.ndarray:
    rows = np.delete(F, j, axis=1).T - F[:, j]
    return rows[np.any(rows != 0.0, axis=1)]


def solve_bsse(game: StageGame) -> SseSolution:
    """Strong Stackelberg equilibrium by enumerating joint follower responses.

    Each joint pure response (j_1..j_t) gives one LP over the leader simplex with
    per-type incentive constraints; the best feasible one wins. Profiles are
    visited in decreasing order of a relaxation bound (the objective's max over
    the bare simplex), so the search stops once no remaining profile can come
    within OPT_TOL of the incumbent. Among profiles within OPT_TOL of the best
    value the lexicographically smallest is returned, exactly as a full scan
    with the same rule would.
    """
    L, F, theta = game.leader_matrices, game.follower_matrices, game.theta
    n, t = game.n_leader, game.n_types

    cands = [[j for j in range(F[i].shape[1]) if _can_best_respond(F[i], j)] for i in range(t)]

    # obj[a, c_1, .., c_t] = sum_i theta_i L_i[a, cands_i[c_i]]
    obj = np.zeros((n,) + tuple(len(c) for c in cands))
    for i in range(t):
        shape = [n] + [1] * t
        shape[i + 1] = len(cands[i])
        obj = obj + theta[i] * L[i][:, cands[i]].reshape(shape)
    obj = obj.reshape(n, -1)
    bounds = obj.max(axis=0)
    order = np.argsort(-bounds, kind="stable")
    grid = tuple(len(c) for c in cands)

    best = -np.inf
    found: list[tuple[float, int, np.ndarray]] = []
    for flat in order:
        bound = bounds[flat]
        if bound < best - OPT_TOL:
            break
        combo = np.unravel_index(flat, grid)
        profile = [cands[i][combo[i]] for i in range(t)]
        c = obj[:, flat]

        x = None
        for a in np.flatnonzero(c >= bound - TIE_TOL):
            if all(F[i][a, profile[i]] >= F[i][a].max() - FEAS_TOL for i in range(t)):
                x = np.zeros(n)
                x[a] = 1.0
                break
        if x is None:
            rows = [_incentive_rows(F[i], profile[i]) for i in range(t)]
            A = np.vstack(rows) if rows else np.zeros((0, n))
            found_lp = _simplex_lp(c, A)
            if found_lp is None:
                continue
            x = found_lp[0]
        value = float(c @ x)
        found.append((value, int(flat), x))
        best = max(best, value)

    top = max(v for v, _, _ in found)
    value, flat, x = min((f for f in found if f[0] >= top - OPT_TOL), key=lambda f: f[1])
    combo = np.unravel_index(flat, grid)
    responses = tuple(int(cands[i][combo[i]]) for i in range(t))
    v_leader = float(sum(theta[i] * (x @ L[i])[responses[i]] for i in range(t)))
    v_followers = tuple(float((x @ F[i])[responses[i]]) for i in range(t))
    return SseSolution(x, responses, v_leader, v_followers)


def harsanyi_transform(game: StageGame) -> StageGame:
    """Collapse the types into one follower whose actions are joint responses.

    Columns enumerate (j_1..j_t) in lexicographic order; payoffs are the
    theta-weighted sums of the per-type payoffs.
    """
    counts = game.follower_counts
    combos = np.array(list(itertools.product(*(range(m) for m in counts))), dtype=int)
    lead = sum(game.theta[i] * game.leader_matrices[i][:, combos[:, i]] for i in range(game.n_types))
    foll = sum(game.theta[i] * game.follower_matrices[i][:, combos[:, i]] for i in range(game.n_types))
    return StageGame((lead,), (foll,), np.ones(1))


def solve_maximin(matrix) -> tuple[np.ndarray, float]:
    """Leader's maximin strategy for a zero-sum game given as leader payoffs."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("need a nonempty payoff matrix")
    n, m = M.shape
    # variables (x_1..x_n, v): maximise v s.t. v - x @ M[:, j] <= 0
    A = np.hstack([-M.T, np.ones((m, 1))])
    lp = LinearProgram(
        np.r_[np.zeros(n), 1.0],
        A,
        np.zeros(m),
        A_eq=np.r_[np.ones(n), 0.0].reshape(1, -1),
        b_eq=[1.0],
        lower=np.r_[np.zeros(n), -np.inf],
    )
    sol = solve_lp(lp)
    x = _simplex_clean(sol.point[:n])
    return x, float((x @ M).min())


# ---------------------------------------------------------------------------
# Nash equilibria of small bimatrix games


def _regrets(A, B, x, y) -> tuple[float, float]:
    return float((A @ y).max() - x @ A @ y), float((x @ B).max() - x @ B @ y)


def _square_support(A, B, I, J):
    k = len(I)
    # y on J makes the row player indifferent over I; x on I does the same for columns over J
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = A[np.ix_(I, J)]
    M[:k, k] = -1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    N = np.zeros((k + 1, k + 1))
    N[:k, :k] = B[np.ix_(I, J)].T
    N[:k, k] = -1.0
    N[k, :k] = 1.0
    try:
        ys = np.linalg.solve(M, rhs)
        xs = np.linalg.solve(N, rhs)
    except np.linalg.LinAlgError:
        return None
    if np.any(ys[:k] < -1e-12) or np.any(xs[:k] < -1e-12):
        return None
    x = np.zeros(A.shape[0])
    y = np.zeros(A.shape[1])
    x[list(I)] = xs[:k]
    y[list(J)] = ys[:k]
    return _simplex_clean(x), _simplex_clean(y)


def _support_lp(P, I, J):
    """Mixed strategy on support J (columns of P) making rows I optimal for the other side."""
    n_rows, n_cols = P.shape
    k = len(J)
    # variables: y_J (>= 0), u (free); maximise 0
    sub = P[:, list(J)]
    eq = np.hstack([sub[list(I)], -np.ones((len(I), 1))])
    eq = np.vstack([eq, np.r_[np.ones(k), 0.0]])
    others = [r for r in range(n_rows) if r not in I]
    ineq = np.hstack([sub[others], -np.ones((len(others), 1))]) if others else None
    lp = LinearProgram(
        np.zeros(k + 1),
        ineq,
        np.zeros(len(others)) if others else None,
        A_eq=eq,
        b_eq=np.r_[np.zeros(len(I)), 1.0],
        lower=np.r_[np.zeros(k), -np.inf],
    )
    sol = solve_lp(lp)
    if sol.status != "optimal":
        return None
    y = np.zeros(n_cols)
    y[list(J)] = sol.point[:k]
    return _simplex_clean(y)


def solve_nash(leader_matrix, follower_matrix, max_actions: int = NASH_MAX_ACTIONS):
    """One Nash equilibrium by support enumeration.

    Supports are tried in a fixed order: equal sizes first (size 1 upwards,
    lexicographic within a size), then, for degenerate games, all unequal
    support pairs by total size. Returns (x, y, v_leader, v_follower).
    """
    A = np.asarray(leader_matrix, dtype=float)
    B = np.asarray(follower_matrix, dtype=float)
    if A.ndim != 2 or A.shape != B.shape:
        raise ValueError(f"payoff matrices differ in shape: {A.shape} vs {B.shape}")
    m, n = A.shape
    if max(m, n) > max_actions:
        raise GameSizeError(f"{m}x{n} game exceeds the {max_actions}-action limit")

    def accept(x, y):
        rl, rf = _regrets(A, B, x, y)
        return rl <= NASH_REGRET_TOL and rf <= NASH_REGRET_TOL

    for k in range(1, min(m, n) + 1):
        for I in itertools.combinations(range(m), k):
            for J in itertools.combinations(range(n), k):
                found = _square_support(A, B, I, J)
                if found is not None and accept(*found):
                    x, y = found
                    return x, y, float(x @ A @ y), float(x @ B @ y)

    pairs = [
        (I, J)
        for a in range(1, m + 1)
        for b in range(1, n + 1)
        if a != b
        for I in itertools.combinations(range(m), a)
        for J in itertools.combinations(range(n), b)
    ]
    pairs.sort(key=lambda p: (len(p[0]) + len(p[1]), len(p[0]), p[0], p[1]))
    for I, J in pairs:
        y = _support_lp(A, I, J)
        if y is None:
            continue
        x = _support_lp(B.T, J, I)
        if x is not None and accept(x, y):
            return x, y, float(x @ A @ y), float(x @ B @ y)
    raise RuntimeError("no equilibrium found; payoffs may be non-finite")
