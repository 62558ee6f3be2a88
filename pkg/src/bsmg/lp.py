"""Dense two-phase simplex with Bland's anti-cycling rule.

Small and exact enough for the stage games solved here (a handful of leader
actions, tens of incentive constraints). Nothing clever: a full tableau,
smallest-index entering and leaving choices, artificial variables only on
rows that need them.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9

Status = Literal["optimal", "infeasible", "unbounded"]


class LpDimensionError(ValueError):
    pass


@dataclass
class LinearProgram:
    """maximize c @ x  s.t.  A_ineq x (<= or >=) b_ineq,  A_eq x = b_eq,  x >= lower.

    ``lower`` defaults to zeros; an entry of ``-inf`` makes that variable free.
    ``senses`` holds one of ``"<="`` / ``">="`` per inequality row (all ``"<="``
    when omitted).
    """

    objective: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    senses: Sequence[str] | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.A_ineq, self.b_ineq = _rows(self.A_ineq, self.b_ineq, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        if self.senses is None:
            self.senses = ["<="] * len(self.b_ineq)
        self.senses = list(self.senses)
        if len(self.senses) != len(self.b_ineq):
            raise LpDimensionError(
                f"{len(self.senses)} senses for {len(self.b_ineq)} inequality rows"
            )
        bad = [s for s in self.senses if s not in ("<=", ">=")]
        if bad:
            raise LpDimensionError(f"unknown constraint sense {bad[0]!r}")
        if self.lower is None:
            self.lower = np.zeros(n)
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        if self.lower.size != n:
            raise LpDimensionError(f"{self.lower.size} lower bounds for {n} variables")
        if np.any(np.isposinf(self.lower)) or np.any(np.isnan(self.lower)):
            raise LpDimensionError("lower bounds must be finite or -inf")

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass
class LpSolution:
    status: Status
    point: np.ndarray | None = None
    value: float | None = None
    iterations: int = field(default=0, compare=False)


def _rows(A, b, n: int, what: str) -> tuple[np.ndarray, np.ndarray]:
    if A is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    if A is None or b is None:
        raise LpDimensionError(f"{what} constraints need both a matrix and a rhs")
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, n))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n:
        raise LpDimensionError(f"{what} matrix has {A.shape[1]} columns, expected {n}")
    if A.shape[0] != b.size:
        raise LpDimensionError(f"{what} matrix has {A.shape[0]} rows but rhs has {b.size}")
    return A, b


def _pivot(T: np.ndarray, r: int, k: int) -> None:
    T[r] /= T[r, k]
    col = T[:, k].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run_simplex(T: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> tuple[str, int]:
    """Maximise over a tableau whose last row holds reduced costs (z_j - c_j).

    Only the first ``n_cols`` columns may enter. Bland's rule throughout.
    """
    m = T.shape[0] - 1
    for it in range(max_iter):
        reduced = T[m, :n_cols]
        candidates = np.flatnonzero(reduced < -PIVOT_TOL)
        if candidates.size == 0:
            return "optimal", it
        k = int(candidates[0])
        col = T[:m, k]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", it
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        r = int(min(tied, key=lambda i: basis[i]))
        _pivot(T, r, k)
        basis[r] = k
    raise RuntimeError(f"simplex did not terminate within {max_iter} pivots")


def solve_lp(lp: LinearProgram, max_iter: int = 10_000) -> LpSolution:
    n = lp.n_vars
    lower = lp.lower
    free = np.isneginf(lower)
    shift = np.where(free, 0.0, lower)

    # one column per variable plus a negative part for each free one
    expand = [np.eye(n)]
    if free.any():
        expand.append(-np.eye(n)[:, free])
    E = np.hstack(expand)  # x = shift + E @ y
    n_y = E.shape[1]

    A_all = np.vstack([lp.A_ineq, lp.A_eq])
    A = A_all @ E
    b = np.concatenate([lp.b_ineq, lp.b_eq]) - A_all @ shift
    kinds = list(lp.senses) + ["="] * len(lp.b_eq)
    c = lp.objective @ E

    m = len(kinds)
    if m == 0:
        if np.any(c > PIVOT_TOL):
            return LpSolution("unbounded")
        return LpSolution("optimal", shift.copy(), float(lp.objective @ shift))

    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    kinds = [
        {"<=": ">=", ">=": "<=", "=": "="}[k] if f else k for k, f in zip(kinds, flip)
    ]

    n_slack = sum(k != "=" for k in kinds)
    n_art = sum(k != "<=" for k in kinds)
    width = n_y + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n_y] = A
    T[:m, -1] = b
    basis = [0] * m
    si, ai = n_y, n_y + n_slack
    art_cols = []
    for r, k in enumerate(kinds):
        if k == "<=":
            T[r, si] = 1.0
            basis[r] = si
            si += 1
        else:
            if k == ">=":
                T[r, si] = -1.0
                si += 1
            T[r, ai] = 1.0
            basis[r] = ai
            art_cols.append(ai)
            ai += 1

    iters = 0
    if art_cols:
        # phase 1: maximise -sum(artificials)
        cost = np.zeros(width)
        cost[art_cols] = -1.0
        T[m, :width] = -cost
        T[m, -1] = 0.0
        for r in range(m):
            cb = cost[basis[r]]
            if cb:
                T[m] += cb * T[r]
        status, it = _run_simplex(T, basis, width, max_iter)
        iters += it
        scale = max(1.0, float(np.abs(b).max()))
        if T[m, -1] < -FEAS_TOL * scale:
            return LpSolution("infeasible", iterations=iters)
        # drive zero-level artificials out of the basis, dropping redundant rows
        art_set = set(art_cols)
        keep = []
        for r in range(m):
            if basis[r] in art_set:
                cand = np.flatnonzero(np.abs(T[r, : n_y + n_slack]) > PIVOT_TOL)
                if cand.size == 0:
                    continue
                k = int(cand[0])
                _pivot(T, r, k)
                basis[r] = k
            keep.append(r)
        T = np.vstack([T[keep], T[m : m + 1]])
        basis = [basis[r] for r in keep]
        T = np.delete(T, art_cols, axis=1)
        m = len(keep)
        width = n_y + n_slack

    cost = np.zeros(width)
    cost[:n_y] = c
    T[m, :width] = -cost
    T[m, -1] = 0.0
    for r in range(m):
        cb = cost[basis[r]]
        if cb:
            T[m] += cb * T[r]
    status, it = _run_simplex(T, basis, width, max_iter)
    iters += it
    if status == "unbounded":
        return LpSolution("unbounded", iterations=iters)

    y = np.zeros(width)
    for r in range(m):
        y[basis[r]] = T[r, -1]
    y = np.maximum(y[:n_y], 0.0)
    x = shift + E @ y
    return LpSolution("optimal", x, float(lp.objective @ x), iters)


# ---------------------------------------------------------------------------
# small LPs over the probability simplex

# above this many candidate vertices callers should fall back to solve_lp
VERTEX_CAP = 4000


def simplex_vertex_count(n: int, n_rows: int) -> int:
    """Number of candidate vertices ``max_over_simplex`` would enumerate."""
    return math.comb(n_rows + n, n - 1)


@functools.lru_cache(maxsize=256)
def _tight_sets(n_cons: int, size: int) -> np.ndarray:
    idx = np.array(list(itertools.combinations(range(n_cons), size)), dtype=int)
    idx.setflags(write=False)
    return idx


def max_over_simplex(c, G=None, tol: float = FEAS_TOL):
    """maximize c @ x over {x >= 0, sum x = 1, G x <= 0} by vertex enumeration.

    Every vertex of that polytope makes n-1 of the inequalities tight, so all
    such choices are solved as one batch of n-by-n systems and the best
    feasible point wins (first in enumeration order on ties). Returns
    ``(x, value)``, or ``None`` when the set is empty. Exact but combinatorial:
    meant for a few leader actions and a few dozen rows.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    scale = max(1.0, float(np.abs(G).max())) if G.size else 1.0
    if n == 1:
        return (np.ones(1), float(c[0])) if np.all(G[:, 0] <= tol * scale) else None
    cons = np.vstack([G, -np.eye(n)])
    idx = _tight_sets(len(cons), n - 1)
    M = np.empty((len(idx), n, n))
    M[:, : n - 1, :] = cons[idx]
    M[:, n - 1, :] = 1.0
    ok = np.abs(np.linalg.det(M)) > 1e-12
    if not ok.any():
        return None
    rhs = np.zeros((int(ok.sum()), n, 1))
    rhs[:, -1, 0] = 1.0
    X = np.linalg.solve(M[ok], rhs)[..., 0]
    feas = np.all(X @ cons.T <= tol * scale, axis=1)
    if not feas.any():
        return None
    X = X[feas]
    vals = X @ c
    x = np.clip(X[int(np.argmax(vals))], 0.0, None)
    x /= x.sum()
    return x, float(c @ x)
