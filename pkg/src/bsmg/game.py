"""BSMG data model, instance files and the stage-game constructor.

States, types and actions are strings in files and dense indices in memory;
the index is the position in the file's list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np

PROB_TOL = 1e-9

INSTANCE_KEYS = (
    "states",
    "attacker_types",
    "theta",
    "defender_actions",
    "attacker_actions",
    "transitions",
    "utilities",
    "discount",
    "start_states",
    "terminal_states",
)
# optional block read by the environment constructors only
EXTENSION_KEY = "env"

ValidationReport = list  # list[str]; empty means valid


class SpecError(ValueError):
    pass


class SpecParseError(SpecError):
    pass


class SpecValidationError(SpecError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid game spec:\n  " + "\n  ".join(self.violations))


class UnknownStateError(KeyError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GameSpec:
    """The full BSMG tuple.

    ``transitions[s][i]`` has shape (|A^D(s)|, |A^{A_i}(s)|, |S|);
    ``u_defender[s][i]`` and ``u_attacker[s][i]`` have shape
    (|A^D(s)|, |A^{A_i}(s)|). ``theta`` has shape (|S|, t).
    """

    states: tuple[str, ...]
    attacker_types: tuple[str, ...]
    theta: np.ndarray
    defender_actions: tuple[tuple[str, ...], ...]
    attacker_actions: tuple[tuple[tuple[str, ...], ...], ...]
    transitions: tuple[tuple[np.ndarray, ...], ...]
    u_defender: tuple[tuple[np.ndarray, ...], ...]
    u_attacker: tuple[tuple[np.ndarray, ...], ...]
    discount: float
    start_states: tuple[str, ...]
    terminal_states: tuple[str, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "states", tuple(self.states))
        set_(self, "attacker_types", tuple(self.attacker_types))
        set_(self, "theta", _frozen(self.theta))
        set_(self, "defender_actions", tuple(tuple(a) for a in self.defender_actions))
        set_(
            self,
            "attacker_actions",
            tuple(tuple(tuple(a) for a in per_type) for per_type in self.attacker_actions),
        )
        for name in ("transitions", "u_defender", "u_attacker"):
            set_(self, name, tuple(tuple(_frozen(m) for m in row) for row in getattr(self, name)))
        set_(self, "discount", float(self.discount))
        set_(self, "start_states", tuple(self.start_states))
        set_(self, "terminal_states", tuple(self.terminal_states))
        set_(self, "_index", {s: k for k, s in enumerate(self.states)})

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_types(self) -> int:
        return len(self.attacker_types)

    def index_of(self, s) -> int:
        """Index of a state given by name or index."""
        if isinstance(s, (int, np.integer)) and not isinstance(s, bool):
            if 0 <= s < self.n_states:
                return int(s)
        elif s in self._index:
            return self._index[s]
        raise UnknownStateError(f"unknown state {s!r}")

    def is_terminal(self, s) -> bool:
        return self.states[self.index_of(s)] in self.terminal_states

    @property
    def terminal_mask(self) -> np.ndarray:
        return np.array([s in self.terminal_states for s in self.states])

    def n_def(self, s: int) -> int:
        return len(self.defender_actions[s])

    def n_att(self, s: int, i: int) -> int:
        return len(self.attacker_actions[s][i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, GameSpec):
            return NotImplemented
        return specs_close(self, other, atol=0.0)


def specs_close(a: GameSpec, b: GameSpec, atol: float = 1e-12) -> bool:
    if (
        a.states != b.states
        or a.attacker_types != b.attacker_types
        or a.defender_actions != b.defender_actions
        or a.attacker_actions != b.attacker_actions
        or a.start_states != b.start_states
        or a.terminal_states != b.terminal_states
        or abs(a.discount - b.discount) > atol
    ):
        return False
    if a.theta.shape != b.theta.shape or not np.allclose(a.theta, b.theta, rtol=0, atol=atol):
        return False
    for name in ("transitions", "u_defender", "u_attacker"):
        for ra, rb in zip(getattr(a, name), getattr(b, name)):
            for ma, mb in zip(ra, rb):
                if ma.shape != mb.shape or not np.allclose(ma, mb, rtol=0, atol=atol):
                    return False
    return True


@dataclass(frozen=True)
class StageGame:
    """One-shot Bayesian bimatrix game: per-type payoff matrices and a type prior."""

    leader_matrices: tuple[np.ndarray, ...]
    follower_matrices: tuple[np.ndarray, ...]
    theta: np.ndarray

    def __post_init__(self) -> None:
        L = tuple(np.asarray(m, dtype=float) for m in self.leader_matrices)
        F = tuple(np.asarray(m, dtype=float) for m in self.follower_matrices)
        theta = np.asarray(self.theta, dtype=float).ravel()
        if not L or len(L) != len(F) or len(L) != theta.size:
            raise ValueError("need one leader/follower matrix pair per type")
        rows = L[0].shape[0] if L[0].ndim == 2 else -1
        for i, (l, f) in enumerate(zip(L, F)):
            if l.ndim != 2 or l.shape != f.shape:
                raise ValueError(f"type {i}: leader/follower matrices differ in shape")
            if l.shape[0] != rows or l.shape[1] == 0 or rows == 0:
                raise ValueError(f"type {i}: matrices must share a nonzero leader row count")
        if np.any(theta < 0) or abs(theta.sum() - 1.0) > PROB_TOL:
            raise ValueError("theta must be a probability vector")
        object.__setattr__(self, "leader_matrices", L)
        object.__setattr__(self, "follower_matrices", F)
        object.__setattr__(self, "theta", theta)

    @property
    def n_leader(self) -> int:
        return self.leader_matrices[0].shape[0]

    @property
    def n_types(self) -> int:
        return len(self.leader_matrices)

    @property
    def follower_counts(self) -> tuple[int, ...]:
        return tuple(m.shape[1] for m in self.follower_matrices)


@dataclass(frozen=True, eq=False)
class QTables:
    """Q^{D,i}(s, a^D, a^{A_i}) and Q^{A_i}(s, a^D, a^{A_i}), indexed [s][i][aD, aA]."""

    q_defender: tuple[tuple[np.ndarray, ...], ...]
    q_attacker: tuple[tuple[np.ndarray, ...], ...]

    @classmethod
    def zeros(cls, spec: GameSpec) -> "QTables":
        shape = [
            [(spec.n_def(s), spec.n_att(s, i)) for i in range(spec.n_types)]
            for s in range(spec.n_states)
        ]
        return cls(
            tuple(tuple(np.zeros(sh) for sh in row) for row in shape),
            tuple(tuple(np.zeros(sh) for sh in row) for row in shape),
        )

    def copy(self) -> "QTables":
        return QTables(
            tuple(tuple(m.copy() for m in row) for row in self.q_defender),
            tuple(tuple(m.copy() for m in row) for row in self.q_attacker),
        )

    def matches(self, spec: GameSpec) -> bool:
        if len(self.q_defender) != spec.n_states or len(self.q_attacker) != spec.n_states:
            return False
        for s in range(spec.n_states):
            for q in (self.q_defender[s], self.q_attacker[s]):
                if len(q) != spec.n_types:
                    return False
                for i in range(spec.n_types):
                    if q[i].shape != (spec.n_def(s), spec.n_att(s, i)):
                        return False
                    if not np.all(np.isfinite(q[i])):
                        return False
        return True


@dataclass(frozen=True, eq=False)
class ValueFunctions:
    v_defender: np.ndarray  # (|S|,)
    v_attacker: np.ndarray  # (|S|, t)

    @classmethod
    def zeros(cls, spec: GameSpec) -> "ValueFunctions":
        return cls(np.zeros(spec.n_states), np.zeros((spec.n_states, spec.n_types)))

    def sup_diff(self, other: "ValueFunctions") -> float:
        return float(
            max(
                np.abs(self.v_defender - other.v_defender).max(initial=0.0),
                np.abs(self.v_attacker - other.v_attacker).max(initial=0.0),
            )
        )


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Leader mixed strategy x(s) per state and pure follower responses q_i(s)."""

    leader: tuple[np.ndarray, ...]
    followers: np.ndarray  # (|S|, t) int

    def check(self, spec: GameSpec) -> list[str]:
        problems = []
        for s in range(spec.n_states):
            x = self.leader[s]
            if x.shape != (spec.n_def(s),) or np.any(x < -PROB_TOL) or abs(x.sum() - 1) > PROB_TOL:
                problems.append(f"state {spec.states[s]}: leader strategy off the simplex")
            for i in range(spec.n_types):
                if not 0 <= self.followers[s, i] < spec.n_att(s, i):
                    problems.append(f"state {spec.states[s]}, type {i}: bad follower action")
        return problems


def validate(spec: GameSpec) -> ValidationReport:
    """Every invariant violation of ``spec``; an empty list means valid."""
    v: list[str] = []
    k, t = spec.n_states, spec.n_types
    if k == 0:
        v.append("no states")
    if t == 0:
        v.append("no attacker types")
    if len(set(spec.states)) != k:
        v.append("duplicate state identifiers")
    if len(set(spec.attacker_types)) != t:
        v.append("duplicate attacker type identifiers")
    if not (0.0 <= spec.discount < 1.0) or not math.isfinite(spec.discount):
        v.append(f"discount out of [0,1): {spec.discount}")

    if spec.theta.shape != (k, t):
        v.append(f"theta has shape {spec.theta.shape}, expected {(k, t)}")
    else:
        for s in range(k):
            row = spec.theta[s]
            if np.any(row < 0) or not np.all(np.isfinite(row)) or abs(row.sum() - 1) > PROB_TOL:
                v.append(f"theta[{spec.states[s]}] is not a probability vector: {row.tolist()}")

    if not spec.start_states:
        v.append("start_states is empty")
    known = set(spec.states)
    for name in ("start_states", "terminal_states"):
        for s in getattr(spec, name):
            if s not in known:
                v.append(f"{name} contains unknown state {s!r}")
    both = set(spec.start_states) & set(spec.terminal_states)
    if both:
        v.append(f"states both start and terminal: {sorted(both)}")

    if len(spec.defender_actions) != k or len(spec.attacker_actions) != k:
        v.append("action lists must be given for every state")
        return v
    for s in range(k):
        sname = spec.states[s]
        if not spec.defender_actions[s]:
            v.append(f"state {sname}: empty defender action list")
        if len(set(spec.defender_actions[s])) != len(spec.defender_actions[s]):
            v.append(f"state {sname}: duplicate defender actions")
        if len(spec.attacker_actions[s]) != t:
            v.append(f"state {sname}: attacker actions must be given for every type")
            continue
        for i in range(t):
            if not spec.attacker_actions[s][i]:
                v.append(f"state {sname}, type {spec.attacker_types[i]}: empty attacker action list")
            if len(set(spec.attacker_actions[s][i])) != len(spec.attacker_actions[s][i]):
                v.append(f"state {sname}, type {spec.attacker_types[i]}: duplicate attacker actions")

    for name in ("transitions", "u_defender", "u_attacker"):
        table = getattr(spec, name)
        if len(table) != k or any(len(row) != t for row in table):
            v.append(f"{name} must be indexed [state][type]")
            return v
    for s in range(k):
        sname = spec.states[s]
        for i in range(t):
            shape = (len(spec.defender_actions[s]), len(spec.attacker_actions[s][i]))
            for name in ("u_defender", "u_attacker"):
                m = getattr(spec, name)[s][i]
                if m.shape != shape:
                    v.append(f"{name}[{sname}][{i}] has shape {m.shape}, expected {shape}")
                elif not np.all(np.isfinite(m)):
                    v.append(f"{name}[{sname}][{i}] has non-finite entries")
            tr = spec.transitions[s][i]
            if tr.shape != shape + (k,):
                v.append(f"transitions[{sname}][{i}] has shape {tr.shape}, expected {shape + (k,)}")
                continue
            for d in range(shape[0]):
                for a in range(shape[1]):
                    row = tr[d, a]
                    if np.any(row < 0) or not np.all(np.isfinite(row)) or abs(row.sum() - 1) > PROB_TOL:
                        v.append(
                            "transition row not a distribution at "
                            f"(s={sname}, a_D={spec.defender_actions[s][d]}, "
                            f"type={spec.attacker_types[i]}, a_A={spec.attacker_actions[s][i][a]}): "
                            f"sum={row.sum():.12g}"
                        )
    return v


# ---------------------------------------------------------------------------
# instance files


def spec_to_dict(spec: GameSpec) -> dict:
    transitions, utilities = [], []
    for s, sname in enumerate(spec.states):
        for i, tname in enumerate(spec.attacker_types):
            for d, dname in enumerate(spec.defender_actions[s]):
                for a, aname in enumerate(spec.attacker_actions[s][i]):
                    row = spec.transitions[s][i][d, a]
                    transitions.append(
                        {
                            "s": sname,
                            "d_action": dname,
                            "type": tname,
                            "a_action": aname,
                            "next": {spec.states[n]: float(p) for n, p in enumerate(row) if p != 0.0},
                        }
                    )
                    utilities.append(
                        {
                            "s": sname,
                            "d_action": dname,
                            "type": tname,
                            "a_action": aname,
                            "u_defender": float(spec.u_defender[s][i][d, a]),
                            "u_attacker": float(spec.u_attacker[s][i][d, a]),
                        }
                    )
    return {
        "states": list(spec.states),
        "attacker_types": list(spec.attacker_types),
        "theta": {s: spec.theta[k].tolist() for k, s in enumerate(spec.states)},
        "defender_actions": {s: list(spec.defender_actions[k]) for k, s in enumerate(spec.states)},
        "attacker_actions": {
            s: {tn: list(spec.attacker_actions[k][i]) for i, tn in enumerate(spec.attacker_types)}
            for k, s in enumerate(spec.states)
        },
        "transitions": transitions,
        "utilities": utilities,
        "discount": spec.discount,
        "start_states": list(spec.start_states),
        "terminal_states": list(spec.terminal_states),
    }


def _need(d: dict, key: str, where: str = "instance"):
    if key not in d:
        raise SpecParseError(f"{where}: missing field {key!r}")
    return d[key]


def spec_from_dict(data: dict, check: bool = True) -> GameSpec:
    """Build a spec from the parsed instance schema; raises on schema or validation errors."""
    if not isinstance(data, dict):
        raise SpecParseError("instance: top level must be an object")
    for key in INSTANCE_KEYS:
        _need(data, key)
    extra = set(data) - set(INSTANCE_KEYS) - {EXTENSION_KEY}
    if extra:
        raise SpecParseError(f"instance: unknown fields {sorted(extra)}")

    try:
        states = [str(s) for s in data["states"]]
        types = [str(t) for t in data["attacker_types"]]
        sidx = {s: k for k, s in enumerate(states)}
        tidx = {t: i for i, t in enumerate(types)}
        theta = np.array([[float(p) for p in _need(data["theta"], s, "theta")] for s in states])
        if theta.size == 0:
            theta = theta.reshape(len(states), len(types))
        d_actions = [list(map(str, _need(data["defender_actions"], s, "defender_actions"))) for s in states]
        a_actions = []
        for s in states:
            per_state = _need(data["attacker_actions"], s, "attacker_actions")
            a_actions.append([list(map(str, _need(per_state, t, f"attacker_actions[{s}]"))) for t in types])
        k, t = len(states), len(types)
        didx = [{a: j for j, a in enumerate(acts)} for acts in d_actions]
        aidx = [[{a: j for j, a in enumerate(acts)} for acts in row] for row in a_actions]

        trans = []
        for s in range(k):
            row = []
            for i in range(t):
                m = np.zeros((len(d_actions[s]), len(a_actions[s][i]), k))
                m[:, :, s] = 1.0  # default self-loop
                row.append(m)
            trans.append(row)
        u_d = [[np.zeros((len(d_actions[s]), len(a_actions[s][i]))) for i in range(t)] for s in range(k)]
        u_a = [[np.zeros_like(m) for m in row] for row in u_d]

        def locate(rec: dict, where: str):
            s = sidx[_need(rec, "s", where)]
            i = tidx[_need(rec, "type", where)]
            d = didx[s][_need(rec, "d_action", where)]
            a = aidx[s][i][_need(rec, "a_action", where)]
            return s, i, d, a

        for n, rec in enumerate(data["transitions"]):
            s, i, d, a = locate(rec, f"transitions[{n}]")
            row = np.zeros(k)
            for nxt, p in _need(rec, "next", f"transitions[{n}]").items():
                row[sidx[nxt]] = float(p)
            trans[s][i][d, a] = row
        for n, rec in enumerate(data["utilities"]):
            s, i, d, a = locate(rec, f"utilities[{n}]")
            u_d[s][i][d, a] = float(_need(rec, "u_defender", f"utilities[{n}]"))
            u_a[s][i][d, a] = float(_need(rec, "u_attacker", f"utilities[{n}]"))

        spec = GameSpec(
            states=states,
            attacker_types=types,
            theta=theta,
            defender_actions=d_actions,
            attacker_actions=a_actions,
            transitions=trans,
            u_defender=u_d,
            u_attacker=u_a,
            discount=float(data["discount"]),
            start_states=[str(s) for s in data["start_states"]],
            terminal_states=[str(s) for s in data["terminal_states"]],
        )
    except SpecParseError:
        raise
    except KeyError as exc:
        raise SpecParseError(f"instance: unknown identifier {exc}") from exc
    except (TypeError, ValueError, AttributeError) as exc:
        raise SpecParseError(f"instance: malformed content ({exc})") from exc

    if check:
        problems = validate(spec)
        if problems:
            raise SpecValidationError(problems)
    return spec


def read_instance(path: str | PathLike) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: not valid JSON ({exc})") from exc


def load_spec(path: str | PathLike) -> GameSpec:
    return spec_from_dict(read_instance(path))


def save_spec(spec: GameSpec, path: str | PathLike, extensions: dict | None = None) -> None:
    data = spec_to_dict(spec)
    if extensions:
        data[EXTENSION_KEY] = extensions
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------


def build_stage_game(spec: GameSpec, q: QTables, s) -> StageGame:
    """The Bayesian bimatrix game that the Q-values define at state ``s``."""
    k = spec.index_of(s)
    return StageGame(
        leader_matrices=tuple(q.q_defender[k]),
        follower_matrices=tuple(q.q_attacker[k]),
        theta=spec.theta[k],
    )


def generate_random_bsmg(
    n_states: int,
    n_types: int,
    n_def_actions: int,
    n_att_actions: int | Sequence[int],
    reward_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
    discount: float = 0.8,
    n_terminal: int = 0,
) -> GameSpec:
    """Random valid BSMG with positive transition and type distributions.

    ``n_att_actions`` may be one count for every type or one count per type.
    The last ``n_terminal`` states are terminal; every other state is a start state.
    """
    if isinstance(n_att_actions, (int, np.integer)):
        n_att_actions = [int(n_att_actions)] * n_types
    n_att_actions = list(n_att_actions)
    if min(n_states, n_types, n_def_actions, *n_att_actions) < 1 or len(n_att_actions) != n_types:
        raise ValueError("all counts must be >= 1, with one attacker count per type")
    if not 0 <= n_terminal < n_states:
        raise ValueError("need at least one non-terminal state")
    lo, hi = map(float, reward_range)
    if not lo <= hi:
        raise ValueError("empty reward range")

    rng = np.random.default_rng(seed)
    states = [f"s{k}" for k in range(n_states)]
    types = [f"A{i + 1}" for i in range(n_types)]

    def simplex(*shape):
        w = rng.uniform(0.05, 1.0, size=shape)
        return w / w.sum(axis=-1, keepdims=True)

    theta = simplex(n_states, n_types)
    trans, u_d, u_a = [], [], []
    for _ in range(n_states):
        trans.append([simplex(n_def_actions, m, n_states) for m in n_att_actions])
        u_d.append([rng.uniform(lo, hi, size=(n_def_actions, m)) for m in n_att_actions])
        u_a.append([rng.uniform(lo, hi, size=(n_def_actions, m)) for m in n_att_actions])
    terminal = states[n_states - n_terminal :] if n_terminal else []
    return GameSpec(
        states=states,
        attacker_types=types,
        theta=theta,
        defender_actions=[[f"d{j}" for j in range(n_def_actions)] for _ in states],
        attacker_actions=[[[f"a{j}" for j in range(m)] for m in n_att_actions] for _ in states],
        transitions=trans,
        u_defender=u_d,
        u_attacker=u_a,
        discount=discount,
        start_states=[s for s in states if s not in terminal],
        terminal_states=terminal,
    )
