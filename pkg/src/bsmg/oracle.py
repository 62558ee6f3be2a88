"""Exact planning on a known BSMG: SSE Bellman backups and value iteration.

Also holds exact evaluation of a fixed leader policy against rational
follower types, which the learners' tests use as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import GameSpec, QTables, StrategyProfile, ValueFunctions, build_stage_game
from .stage import TIE_TOL, solve_bsse


def _check_values(spec: GameSpec, v: ValueFunctions) -> None:
    if v.v_defender.shape != (spec.n_states,) or v.v_attacker.shape != (spec.n_states, spec.n_types):
        raise ValueError("value functions are not indexed by this spec's states and types")


def _terminal_strategy(spec: GameSpec, s: int) -> np.ndarray:
    x = np.zeros(spec.n_def(s))
    x[0] = 1.0
    return x


def q_from_values(spec: GameSpec, v: ValueFunctions) -> QTables:
    """One-step lookahead Q-values; terminal states get all-zero tables."""
    _check_values(spec, v)
    g = spec.discount
    vd = np.where(spec.terminal_mask, 0.0, v.v_defender)
    va = np.where(spec.terminal_mask[:, None], 0.0, v.v_attacker)
    qd, qa = [], []
    for s in range(spec.n_states):
        row_d, row_a = [], []
        for i in range(spec.n_types):
            if spec.states[s] in spec.terminal_states:
                z = np.zeros(spec.u_defender[s][i].shape)
                row_d.append(z)
                row_a.append(z.copy())
                continue
            tr = spec.transitions[s][i]
            row_d.append(spec.u_defender[s][i] + g * tr @ vd)
            row_a.append(spec.u_attacker[s][i] + g * tr @ va[:, i])
        qd.append(tuple(row_d))
        qa.append(tuple(row_a))
    return QTables(tuple(qd), tuple(qa))


def bellman_backup(spec: GameSpec, v: ValueFunctions) -> tuple[QTables, ValueFunctions, StrategyProfile]:
    """Q from ``v`` by one-step lookahead, then the SSE of every stage game."""
    q = q_from_values(spec, v)
    vd = np.zeros(spec.n_states)
    va = np.zeros((spec.n_states, spec.n_types))
    leader, followers = [], np.zeros((spec.n_states, spec.n_types), dtype=int)
    for s in range(spec.n_states):
        if spec.states[s] in spec.terminal_states:
            leader.append(_terminal_strategy(spec, s))
            continue
        sol = solve_bsse(build_stage_game(spec, q, s))
        leader.append(sol.x)
        followers[s] = sol.responses
        vd[s] = sol.v_leader
        va[s] = sol.v_followers
    return q, ValueFunctions(vd, va), StrategyProfile(tuple(leader), followers)


@dataclass
class OracleResult:
    profile: StrategyProfile
    values: ValueFunctions
    q: QTables
    iterations: int
    converged: bool
    # sup-norm change of V at each iteration, for contraction checks
    diffs: list[float] = field(default_factory=list)


def value_iteration(spec: GameSpec, tol: float = 1e-6, max_iter: int = 1000) -> OracleResult:
    """Iterate the SSE backup from zero values.

    Stops once the sup-norm change drops below tol * (1 - gamma) / gamma, which
    for a contracting iteration puts V within ``tol`` of the fixed point (and
    implies the change itself is below ``tol``).
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    g = spec.discount
    stop = tol * (1.0 - g) / g if g > 0 else tol
    v = ValueFunctions.zeros(spec)
    diffs = []
    for it in range(1, max_iter + 1):
        q, v_new, profile = bellman_backup(spec, v)
        d = v_new.sup_diff(v)
        diffs.append(d)
        v = v_new
        if d < stop:
            return OracleResult(profile, v, q, it, True, diffs)
    return OracleResult(profile, v, q, max_iter, False, diffs)


# ---------------------------------------------------------------------------
# fixed-policy evaluation


def rational_followers(spec: GameSpec, leader, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Each type's optimal stationary response to a fixed leader policy.

    With the leader fixed, every type faces an MDP; solve it by value
    iteration and break ties towards the smallest action index.
    """
    k, t, g = spec.n_states, spec.n_types, spec.discount
    term = spec.terminal_mask
    followers = np.zeros((k, t), dtype=int)
    for i in range(t):
        v = np.zeros(k)
        for _ in range(max_iter):
            new = np.zeros(k)
            for s in range(k):
                if term[s]:
                    continue
                vals = leader[s] @ (spec.u_attacker[s][i] + g * spec.transitions[s][i] @ v)
                new[s] = vals.max()
            done = np.abs(new - v).max() < tol
            v = new
            if done:
                break
        for s in range(k):
            if term[s]:
                continue
            vals = leader[s] @ (spec.u_attacker[s][i] + g * spec.transitions[s][i] @ v)
            followers[s, i] = int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])
    return followers


def policy_values(spec: GameSpec, profile: StrategyProfile) -> ValueFunctions:
    """Exact discounted values of a full strategy profile (linear solve).

    Type i's value assumes type i keeps playing after the transition, the same
    convention the Bellman backup uses.
    """
    k, t, g = spec.n_states, spec.n_types, spec.discount
    term = spec.terminal_mask
    P = np.zeros((k, k))
    r = np.zeros(k)
    Pa = np.zeros((t, k, k))
    ra = np.zeros((t, k))
    for s in range(k):
        if term[s]:
            continue
        x = profile.leader[s]
        for i in range(t):
            j = profile.followers[s, i]
            w = spec.theta[s, i]
            step = x @ spec.transitions[s][i][:, j, :]
            P[s] += w * step
            r[s] += w * (x @ spec.u_defender[s][i][:, j])
            Pa[i, s] = step
            ra[i, s] = x @ spec.u_attacker[s][i][:, j]
    P[:, term] = 0.0
    vd = np.linalg.solve(np.eye(k) - g * P, r)
    va = np.zeros((k, t))
    for i in range(t):
        Pi = Pa[i].copy()
        Pi[:, term] = 0.0
        va[:, i] = np.linalg.solve(np.eye(k) - g * Pi, ra[i])
    return ValueFunctions(vd, va)
