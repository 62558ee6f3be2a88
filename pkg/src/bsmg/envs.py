"""Game simulator behind the five-call public API.

A learner sees an ``MTDEnv`` only through ``get_states``, ``get_start_state``,
``get_actions``, ``is_end`` and ``act`` (plus the public type prior, which the
defender is assumed to know). The backing spec is reachable through
``spec_of`` on handles built with ``exposure="oracle"`` and nowhere else.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np

from .game import (
    EXTENSION_KEY,
    PROB_TOL,
    GameSpec,
    SpecError,
    read_instance,
    spec_from_dict,
    validate,
)

NOOP = "no-op"


class ProtocolError(AssertionError):
    """Bad state, action or type passed to the simulator.

    Subclasses AssertionError to honour the simulator's documented contract,
    but is raised explicitly so it survives ``python -O``.
    """


class ExposureError(PermissionError):
    pass


class StructureError(SpecError):
    pass


@dataclass(frozen=True)
class StepOutcome:
    r_defender: float
    r_attacker: float
    next_state: str


class MTDEnv:
    def __init__(
        self,
        spec: GameSpec,
        *,
        exposure: str = "public",
        seed: int | None = None,
        start_states: Sequence[str] | None = None,
        variant: str = "plain",
        domain: str = "generic",
    ):
        problems = validate(spec)
        if problems:
            raise StructureError("invalid backing spec: " + "; ".join(problems))
        if exposure not in ("public", "oracle"):
            raise ValueError(f"unknown exposure {exposure!r}")
        self.__spec = spec
        self.__exposure = exposure
        self.variant = variant
        self.domain = domain
        self.rng = np.random.default_rng(seed)
        self._sidx = {s: k for k, s in enumerate(spec.states)}
        self._didx = [{a: j for j, a in enumerate(acts)} for acts in spec.defender_actions]
        self._aidx = [[{a: j for j, a in enumerate(acts)} for acts in row] for row in spec.attacker_actions]
        self._cum = [[np.cumsum(m, axis=-1) for m in row] for row in spec.transitions]
        self._start = list(spec.start_states)
        if start_states is not None:
            self.start_states = start_states

    @property
    def exposure(self) -> str:
        return self.__exposure

    @property
    def start_states(self) -> list[str]:
        return list(self._start)

    @start_states.setter
    def start_states(self, states: Sequence[str]) -> None:
        states = list(states)
        if not states:
            raise ValueError("start set must be nonempty")
        for s in states:
            self._state(s)
            if s in self.__spec.terminal_states:
                raise ValueError(f"terminal state {s!r} cannot be a start state")
        self._start = states

    def _state(self, s) -> int:
        if s not in self._sidx:
            raise ProtocolError(f"{s!r} is not a state of this game")
        return self._sidx[s]

    # -- public API ---------------------------------------------------------

    def get_states(self) -> list[str]:
        return list(self.__spec.states)

    def get_start_state(self, rng: np.random.Generator | None = None) -> str:
        rng = self.rng if rng is None else rng
        return self._start[int(rng.integers(len(self._start)))]

    def get_actions(self, s=None) -> tuple[list[list[str]], list[str]]:
        """(attacker actions per type, defender actions).

        With a state, the lists for that state; without one, the union over all
        states in first-seen order (identical to any state's lists when the
        action sets do not depend on the state).
        """
        spec = self.__spec
        if s is not None:
            k = self._state(s)
            return [list(a) for a in spec.attacker_actions[k]], list(spec.defender_actions[k])
        att = [list(dict.fromkeys(a for k in range(spec.n_states) for a in spec.attacker_actions[k][i]))
               for i in range(spec.n_types)]
        dfn = list(dict.fromkeys(a for acts in spec.defender_actions for a in acts))
        return att, dfn

    def is_end(self, s) -> bool:
        self._state(s)
        return s in self.__spec.terminal_states

    def act(self, s, a_defender, a_attacker, type_index, rng: np.random.Generator | None = None) -> StepOutcome:
        spec = self.__spec
        k = self._state(s)
        if s in spec.terminal_states:
            raise ProtocolError(f"{s!r} is terminal; no actions are allowed")
        i = self._type(type_index)
        if a_defender not in self._didx[k]:
            raise ProtocolError(f"{a_defender!r} is not a defender action in {s!r}")
        if a_attacker not in self._aidx[k][i]:
            raise ProtocolError(f"{a_attacker!r} is not an action of type {spec.attacker_types[i]} in {s!r}")
        d = self._didx[k][a_defender]
        a = self._aidx[k][i][a_attacker]
        rng = self.rng if rng is None else rng
        cum = self._cum[k][i][d, a]
        nxt = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), spec.n_states - 1)
        return StepOutcome(
            float(spec.u_defender[k][i][d, a]),
            float(spec.u_attacker[k][i][d, a]),
            spec.states[nxt],
        )

    def type_distribution(self, s) -> np.ndarray:
        """The defender's prior over attacker types in ``s``."""
        return self.__spec.theta[self._state(s)].copy()

    def attacker_types(self) -> list[str]:
        return list(self.__spec.attacker_types)

    # -----------------------------------------------------------------------

    def _type(self, type_index) -> int:
        types = self.__spec.attacker_types
        if isinstance(type_index, (int, np.integer)) and not isinstance(type_index, bool):
            if 0 <= type_index < len(types):
                return int(type_index)
        elif type_index in types:
            return types.index(type_index)
        raise ProtocolError(f"{type_index!r} is not an attacker type")

    def _backing_spec(self) -> GameSpec:
        if self.__exposure != "oracle":
            raise ExposureError("this environment handle does not expose its game parameters")
        return self.__spec

    def __repr__(self) -> str:
        return f"MTDEnv(domain={self.domain!r}, variant={self.variant!r}, exposure={self.exposure!r})"


def spec_of(env: MTDEnv) -> GameSpec:
    """Backing spec of an oracle-privileged handle."""
    return env._backing_spec()


def make_env(spec: GameSpec, **kwargs) -> MTDEnv:
    return MTDEnv(spec, **kwargs)


def _load(instance) -> tuple[GameSpec, dict]:
    data = instance if isinstance(instance, dict) else read_instance(instance)
    return spec_from_dict(data), dict(data.get(EXTENSION_KEY) or {})


# ---------------------------------------------------------------------------
# web-application MTD


def threshold_spec(spec: GameSpec, costs: np.ndarray, cost_max: float) -> GameSpec:
    """Switching costs move from the reward into the transition.

    A switch s -> c succeeds with probability 1 - min(1, cost/cost_max) and
    otherwise leaves the system in s. Rewards are the switch-free attack
    utilities, averaged over whether the switch went through.
    """
    k, t = spec.n_states, spec.n_types
    p = 1.0 - np.minimum(1.0, costs / cost_max)
    trans, u_d, u_a = [], [], []
    for s in range(k):
        rt, rd, ra = [], [], []
        for i in range(t):
            tr = np.zeros(spec.transitions[s][i].shape)
            ud = np.zeros(spec.u_defender[s][i].shape)
            ua = np.zeros_like(ud)
            for c in range(k):
                tr[c, :, c] += p[s, c]
                tr[c, :, s] += 1.0 - p[s, c]
                # attack outcome depends on the configuration actually deployed
                stay = spec.u_defender[s][i][s] + costs[s, s]
                move = spec.u_defender[s][i][c] + costs[s, c]
                ud[c] = p[s, c] * move + (1 - p[s, c]) * stay
                ua[c] = p[s, c] * spec.u_attacker[s][i][c] + (1 - p[s, c]) * spec.u_attacker[s][i][s]
            rt.append(tr)
            rd.append(ud)
            ra.append(ua)
        trans.append(rt)
        u_d.append(rd)
        u_a.append(ra)
    return GameSpec(
        states=spec.states,
        attacker_types=spec.attacker_types,
        theta=spec.theta,
        defender_actions=spec.defender_actions,
        attacker_actions=spec.attacker_actions,
        transitions=trans,
        u_defender=u_d,
        u_attacker=u_a,
        discount=spec.discount,
        start_states=spec.start_states,
        terminal_states=spec.terminal_states,
    )


def _check_webapp(spec: GameSpec) -> None:
    if spec.n_states != 4:
        raise StructureError(f"web-app domain needs 4 configurations, got {spec.n_states}")
    if spec.terminal_states:
        raise StructureError("web-app domain has no terminal state")
    for s in range(spec.n_states):
        if spec.defender_actions[s] != spec.states:
            raise StructureError(f"state {spec.states[s]}: defender actions must be the configurations")
        for i in range(spec.n_types):
            if spec.attacker_actions[s][i] != spec.attacker_actions[0][i]:
                raise StructureError("web-app attack sets must not depend on the state")
            tr = spec.transitions[s][i]
            for c in range(spec.n_states):
                if np.any(np.abs(tr[c, :, c] - 1.0) > PROB_TOL):
                    raise StructureError(f"switch {spec.states[s]} -> {spec.states[c]} is not deterministic")


def switch_cost_matrix(spec: GameSpec, table: dict) -> np.ndarray:
    costs = np.zeros((spec.n_states, spec.n_states))
    for s, row in table.items():
        for c, v in row.items():
            try:
                costs[spec.states.index(s), spec.states.index(c)] = float(v)
            except ValueError as exc:
                raise StructureError(f"switch cost for unknown configuration ({s}, {c})") from exc
    if np.any(costs < 0):
        raise StructureError("switch costs must be nonnegative")
    return costs


def make_webapp_env(
    instance: str | PathLike | dict,
    variant: str | None = None,
    *,
    exposure: str = "public",
    seed: int | None = None,
    start_states: Sequence[str] | None = None,
) -> MTDEnv:
    """Web-application MTD: states are configurations, moves are deterministic.

    ``variant="threshold"`` turns the switching costs stored in the instance's
    env block into switch-failure probabilities instead of reward penalties.
    """
    spec, ext = _load(instance)
    _check_webapp(spec)
    variant = variant or ext.get("variant", "plain")
    if start_states is None:
        start_states = ext.get("start_override")
    if variant == "threshold":
        if "switch_costs" not in ext or "cost_max" not in ext:
            raise StructureError("threshold variant needs 'switch_costs' and 'cost_max' in the env block")
        cost_max = float(ext["cost_max"])
        if cost_max <= 0:
            raise StructureError("cost_max must be positive")
        spec = threshold_spec(spec, switch_cost_matrix(spec, ext["switch_costs"]), cost_max)
    elif variant != "plain":
        raise StructureError(f"unknown web-app variant {variant!r}")
    return MTDEnv(spec, exposure=exposure, seed=seed, start_states=start_states, variant=variant, domain="webapp")


# ---------------------------------------------------------------------------
# IDS placement MTD


def _check_ids(spec: GameSpec) -> None:
    if spec.n_types != 1:
        raise StructureError("IDS domain has a single attacker type")
    if len(spec.terminal_states) != 1:
        raise StructureError("IDS domain has exactly one terminal state")
    for s in range(spec.n_states):
        if NOOP not in spec.defender_actions[s]:
            raise StructureError(f"state {spec.states[s]}: defender needs a {NOOP!r} action")
    goal = spec.index_of(spec.terminal_states[0])
    seen = {spec.index_of(s) for s in spec.start_states}
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        if s == goal:
            return
        reach = np.flatnonzero(spec.transitions[s][0].max(axis=(0, 1)) > 0)
        for n in reach:
            if n not in seen:
                seen.add(int(n))
                queue.append(int(n))
    raise StructureError("terminal state is unreachable from the start states")


def make_ids_env(
    instance: str | PathLike | dict,
    *,
    exposure: str = "public",
    seed: int | None = None,
    start_states: Sequence[str] | None = None,
) -> MTDEnv:
    """IDS-placement MTD on an attack graph; all dynamics come from the table."""
    spec, ext = _load(instance)
    _check_ids(spec)
    if start_states is None:
        start_states = ext.get("start_override")
    return MTDEnv(spec, exposure=exposure, seed=seed, start_states=start_states, domain="ids")


def env_from_instance(instance, kind: str | None = None, **kwargs) -> MTDEnv:
    """Dispatch on ``kind`` (or the instance's env block ``domain``)."""
    data = instance if isinstance(instance, dict) else read_instance(instance)
    kind = kind or (data.get(EXTENSION_KEY) or {}).get("domain", "generic")
    if kind == "webapp":
        return make_webapp_env(data, **kwargs)
    if kind == "ids":
        kwargs.pop("variant", None)
        return make_ids_env(data, **kwargs)
    if kind == "generic":
        variant = kwargs.pop("variant", None)
        if variant not in (None, "plain"):
            raise StructureError("generic instances have no variants")
        start = kwargs.pop("start_states", None)
        if start is None:
            start = (data.get(EXTENSION_KEY) or {}).get("start_override")
        return MTDEnv(spec_from_dict(data), start_states=start, **kwargs)
    raise StructureError(f"unknown domain {kind!r}")
