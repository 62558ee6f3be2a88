"""BSS-Q and the baseline defenders, all driven through the public env API.

Every agent faces the same simulated rational attacker: each type keeps its
own Q-table (updated with the same rule as BSS-Q's follower update) and
responds to the defender's announced mixed strategy. BSS-Q and Nash-Q
compute that response inside their stage solve; the static and bandit
baselines get it from ``attacker_best_response``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .envs import MTDEnv
from .game import GameSpec, QTables, StageGame, StrategyProfile
from .stage import TIE_TOL, solve_bsse, solve_nash

AGENTS = ("bssq", "bexpq", "urs", "nashq", "sopt")


@dataclass(frozen=True)
class LearnerConfig:
    episodes: int = 300
    max_episode_len: int = 10
    alpha: float = 0.06
    gamma: float = 0.8
    epsilon_start: float = 0.1
    epsilon_end: float = 0.05
    seed: int = 0
    agent: str = "bssq"
    # step size alpha / (1 + alpha_decay * visits) per cell when set
    alpha_decay: float | None = None
    record_every: int = 1
    # B-EXP-Q: exponential-weights rate and uniform mixing
    exp_rate: float = 0.05
    exp_mix: float = 0.1

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ValueError("invalid learner config: " + "; ".join(problems))

    def problems(self) -> list[str]:
        p = []
        if not 0.0 <= self.alpha <= 1.0:
            p.append(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            p.append(f"gamma {self.gamma} outside [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            p.append("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.episodes < 1 or self.max_episode_len < 1 or self.record_every < 1:
            p.append("episodes, max_episode_len and record_every must be >= 1")
        if self.agent not in AGENTS:
            p.append(f"unknown agent {self.agent!r}")
        if self.alpha_decay is not None and self.alpha_decay < 0:
            p.append("alpha_decay must be >= 0")
        if not 0.0 < self.exp_mix <= 1.0 or self.exp_rate <= 0:
            p.append("need exp_rate > 0 and 0 < exp_mix <= 1")
        return p

    def epsilon(self, episode: int) -> float:
        """Linear decay over the first half of the run, flat afterwards."""
        half = max(1, self.episodes // 2)
        frac = min(1.0, episode / half)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def step_size(self, visits: int) -> float:
        if self.alpha_decay is None:
            return self.alpha
        return self.alpha / (1.0 + self.alpha_decay * visits)


@dataclass
class LearningCurve:
    states: list[str]
    episodes: list[int] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)  # V^D per state
    strategies: list[list[np.ndarray]] = field(default_factory=list)

    def record(self, episode: int, values: np.ndarray, strategies) -> None:
        self.episodes.append(episode)
        self.values.append(np.array(values, dtype=float))
        self.strategies.append([np.array(x, dtype=float) for x in strategies])

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


class ProtocolViolation(RuntimeError):
    pass


def q_update(q_old: float, r: float, v_next: float, alpha: float, gamma: float) -> float:
    return (1.0 - alpha) * q_old + alpha * (r + gamma * v_next)


def epsilon_greedy_sample(x, eps: float, rng: np.random.Generator) -> int:
    """Uniform action with probability ``eps``, otherwise a draw from ``x``.

    Always consumes two uniforms so that the stream position does not depend
    on the branch taken.
    """
    x = np.asarray(x, dtype=float)
    u, v = rng.random(), rng.random()
    n = x.size
    if u < eps:
        return min(int(v * n), n - 1)
    return min(int(np.searchsorted(np.cumsum(x), v * x.sum(), side="right")), n - 1)


def attacker_best_response(q_attacker_slice, x) -> int:
    """argmax_a sum_d x[d] Q^A(d, a), smallest index on ties."""
    Q = np.asarray(q_attacker_slice, dtype=float)
    x = np.asarray(x, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != x.size:
        raise ValueError(f"Q slice of shape {Q.shape} does not match a strategy of length {x.size}")
    vals = x @ Q
    return int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])


# ---------------------------------------------------------------------------
# shared plumbing


class _Game:
    """What a learner may know about an env: its public surface, indexed."""

    def __init__(self, env: MTDEnv):
        self.env = env
        self.states = env.get_states()
        self.sidx = {s: k for k, s in enumerate(self.states)}
        self.k = len(self.states)
        self.terminal = np.array([env.is_end(s) for s in self.states])
        acts = [env.get_actions(s) for s in self.states]
        self.att = [a for a, _ in acts]
        self.dfn = [d for _, d in acts]
        self.t = len(self.att[0])
        self.theta = [env.type_distribution(s) for s in self.states]
        self.theta_cum = [np.cumsum(th) for th in self.theta]
        self.shapes = [[(len(self.dfn[s]), len(self.att[s][i])) for i in range(self.t)] for s in range(self.k)]

    def zeros(self) -> list[list[np.ndarray]]:
        return [[np.zeros(sh) for sh in row] for row in self.shapes]

    def sample_type(self, s: int, rng) -> int:
        c = self.theta_cum[s]
        return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), self.t - 1)

    def start(self, rng) -> int:
        s = self.env.get_start_state(rng)
        if s not in self.sidx:
            raise ProtocolViolation(f"env returned unknown start state {s!r}")
        return self.sidx[s]

    def step(self, s: int, d: int, a: int, i: int, rng) -> tuple[float, float, int]:
        out = self.env.act(self.states[s], self.dfn[s][d], self.att[s][i][a], i, rng)
        if out.next_state not in self.sidx:
            raise ProtocolViolation(f"env returned unknown state {out.next_state!r}")
        return out.r_defender, out.r_attacker, self.sidx[out.next_state]


def _onehot(j: int, n: int) -> np.ndarray:
    e = np.zeros(n)
    e[j] = 1.0
    return e


def _stage(qd, qa, theta) -> StageGame:
    return StageGame(tuple(qd), tuple(qa), theta)


def _check_simplex(x: np.ndarray) -> None:
    if np.any(x < -1e-9) or abs(x.sum() - 1.0) > 1e-9:
        raise AssertionError(f"strategy left the simplex: {x}")


# ---------------------------------------------------------------------------
# BSS-Q


def bssq_learn(env: MTDEnv, cfg: LearnerConfig, trace: list | None = None):
    """Bayesian Strong Stackelberg Q-learning.

    Returns (StrategyProfile, QTables, LearningCurve). When ``trace`` is a list,
    one ``(s, i, d, a)`` tuple per update is appended to it.
    """
    g = _Game(env)
    rng = np.random.default_rng(cfg.seed)
    qd, qa = g.zeros(), g.zeros()
    visits = [[np.zeros(sh, dtype=int) for sh in row] for row in g.shapes]
    x = [np.full(len(g.dfn[s]), 1.0 / len(g.dfn[s])) for s in range(g.k)]
    q = np.zeros((g.k, g.t), dtype=int)
    vd = np.zeros(g.k)
    va = np.zeros((g.k, g.t))
    curve = LearningCurve(g.states)

    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        s = g.start(rng)
        for _ in range(cfg.max_episode_len):
            if g.terminal[s]:
                break
            i = g.sample_type(s, rng)
            d = epsilon_greedy_sample(x[s], eps, rng)
            a = epsilon_greedy_sample(_onehot(q[s, i], g.shapes[s][i][1]), eps, rng)
            r_d, r_a, s2 = g.step(s, d, a, i, rng)
            nd, na = (0.0, 0.0) if g.terminal[s2] else (vd[s2], va[s2, i])
            alpha = cfg.step_size(visits[s][i][d, a])
            visits[s][i][d, a] += 1
            qd[s][i][d, a] = q_update(qd[s][i][d, a], r_d, nd, alpha, cfg.gamma)
            qa[s][i][d, a] = q_update(qa[s][i][d, a], r_a, na, alpha, cfg.gamma)
            if trace is not None:
                trace.append((s, i, d, a))
            sol = solve_bsse(_stage(qd[s], qa[s], g.theta[s]))
            _check_simplex(sol.x)
            x[s] = sol.x
            q[s] = sol.responses
            vd[s] = sol.v_leader
            va[s] = sol.v_followers
            s = s2
        if ep % cfg.record_every == 0 or ep == cfg.episodes - 1:
            curve.record(ep, vd, x)

    profile = StrategyProfile(tuple(x), q)
    qt = QTables(tuple(tuple(r) for r in qd), tuple(tuple(r) for r in qa))
    return profile, qt, curve


# ---------------------------------------------------------------------------
# Nash-Q


def nashq_learn(env: MTDEnv, cfg: LearnerConfig):
    """Same loop as BSS-Q with the stage solve replaced by a Nash equilibrium.

    Single attacker type only. Returns (StrategyProfile, LearningCurve); the
    profile's follower entry is the most likely action of the equilibrium's
    attacker strategy.
    """
    g = _Game(env)
    if g.t != 1:
        raise ValueError("Nash-Q needs a single attacker type")
    rng = np.random.default_rng(cfg.seed)
    qd, qa = g.zeros(), g.zeros()
    visits = [[np.zeros(sh, dtype=int) for sh in row] for row in g.shapes]
    x = [np.full(len(g.dfn[s]), 1.0 / len(g.dfn[s])) for s in range(g.k)]
    y = [_onehot(0, g.shapes[s][0][1]) for s in range(g.k)]
    vd = np.zeros(g.k)
    va = np.zeros(g.k)
    curve = LearningCurve(g.states)

    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        s = g.start(rng)
        for _ in range(cfg.max_episode_len):
            if g.terminal[s]:
                break
            i = g.sample_type(s, rng)
            d = epsilon_greedy_sample(x[s], eps, rng)
            a = epsilon_greedy_sample(y[s], eps, rng)
            r_d, r_a, s2 = g.step(s, d, a, i, rng)
            nd, na = (0.0, 0.0) if g.terminal[s2] else (vd[s2], va[s2])
            alpha = cfg.step_size(visits[s][0][d, a])
            visits[s][0][d, a] += 1
            qd[s][0][d, a] = q_update(qd[s][0][d, a], r_d, nd, alpha, cfg.gamma)
            qa[s][0][d, a] = q_update(qa[s][0][d, a], r_a, na, alpha, cfg.gamma)
            xs, ys, v_l, v_f = solve_nash(qd[s][0], qa[s][0])
            _check_simplex(xs)
            x[s], y[s], vd[s], va[s] = xs, ys, v_l, v_f
            s = s2
        if ep % cfg.record_every == 0 or ep == cfg.episodes - 1:
            curve.record(ep, vd, x)

    followers = np.array([[int(np.argmax(y[s]))] for s in range(g.k)])
    return StrategyProfile(tuple(x), followers), curve


# ---------------------------------------------------------------------------
# baselines: a defender strategy rule against the learning rational attacker


def _baseline_loop(
    env: MTDEnv,
    cfg: LearnerConfig,
    policy: Callable,
    audit: list | None = None,
):
    """Run a defender rule against the simulated rational attacker.

    ``policy(g)`` returns an object with ``strategy(s)`` (current x(s)) and
    ``observe(s, i, d, p_d, r_d, v_next)``. The defender's value estimate uses
    critic tables updated with the same rule as BSS-Q's leader update, so all
    agents' curves measure the same thing: the learned value of the current
    strategy against best-responding types.
    """
    g = _Game(env)
    rng = np.random.default_rng(cfg.seed)
    rule = policy(g)
    qd, qa = g.zeros(), g.zeros()
    visits = [[np.zeros(sh, dtype=int) for sh in row] for row in g.shapes]
    curve = LearningCurve(g.states)

    def values(s: int) -> tuple[float, np.ndarray, np.ndarray]:
        x = rule.strategy(s)
        br = np.array([attacker_best_response(qa[s][i], x) for i in range(g.t)])
        v_att = np.array([(x @ qa[s][i])[br[i]] for i in range(g.t)])
        v_def = float(sum(g.theta[s][i] * (x @ qd[s][i])[br[i]] for i in range(g.t)))
        return v_def, v_att, br

    def all_values() -> np.ndarray:
        return np.array([0.0 if g.terminal[s] else values(s)[0] for s in range(g.k)])

    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        s = g.start(rng)
        for _ in range(cfg.max_episode_len):
            if g.terminal[s]:
                break
            x = rule.strategy(s)
            _check_simplex(x)
            i = g.sample_type(s, rng)
            br = attacker_best_response(qa[s][i], x)
            d = epsilon_greedy_sample(x, eps, rng)
            a = epsilon_greedy_sample(_onehot(br, g.shapes[s][i][1]), eps, rng)
            if audit is not None:
                audit.append((s, i, x.copy(), qa[s][i].copy(), br, a))
            r_d, r_a, s2 = g.step(s, d, a, i, rng)
            if g.terminal[s2]:
                nd, na = 0.0, 0.0
            else:
                v_def, v_att, _ = values(s2)
                nd, na = v_def, v_att[i]
            alpha = cfg.step_size(visits[s][i][d, a])
            visits[s][i][d, a] += 1
            qd[s][i][d, a] = q_update(qd[s][i][d, a], r_d, nd, alpha, cfg.gamma)
            qa[s][i][d, a] = q_update(qa[s][i][d, a], r_a, na, alpha, cfg.gamma)
            p_d = (1 - eps) * x[d] + eps / x.size
            rule.observe(s, i, d, p_d, r_d, nd)
            s = s2
        if ep % cfg.record_every == 0 or ep == cfg.episodes - 1:
            curve.record(ep, all_values(), [rule.strategy(s) for s in range(g.k)])

    leader = tuple(rule.strategy(s) for s in range(g.k))
    followers = np.zeros((g.k, g.t), dtype=int)
    for s in range(g.k):
        if not g.terminal[s]:
            followers[s] = values(s)[2]
    return StrategyProfile(leader, followers), curve


class _Fixed:
    def __init__(self, strategies: list[np.ndarray]):
        self.x = [np.asarray(v, dtype=float) for v in strategies]

    def strategy(self, s: int) -> np.ndarray:
        return self.x[s]

    def observe(self, *args) -> None:
        pass


class _ExpWeights:
    """Per-state exponential weights over defender actions (B-EXP-Q).

    The chosen arm's cumulative reward grows by theta_s(i) * (r + gamma V(s')) / p,
    the type-weighted importance estimate; the strategy mixes the weights'
    softmax with the uniform distribution.
    """

    def __init__(self, g: _Game, cfg: LearnerConfig):
        self.g = g
        self.rate = cfg.exp_rate
        self.mix = cfg.exp_mix
        self.gamma = cfg.gamma
        self.gains = [np.zeros(len(g.dfn[s])) for s in range(g.k)]
        self.x = [np.full(len(g.dfn[s]), 1.0 / len(g.dfn[s])) for s in range(g.k)]

    def strategy(self, s: int) -> np.ndarray:
        return self.x[s]

    def observe(self, s, i, d, p_d, r_d, v_next) -> None:
        self.gains[s][d] += self.g.theta[s][i] * (r_d + self.gamma * v_next) / p_d
        z = np.clip(self.rate * (self.gains[s] - self.gains[s].max()), -50.0, 50.0)
        w = np.exp(z)
        n = w.size
        self.x[s] = (1 - self.mix) * w / w.sum() + self.mix / n


def urs_policy(env: MTDEnv, cfg: LearnerConfig | None = None) -> StrategyProfile:
    """Uniform random strategy in every state; followers from the rational attacker."""
    return urs_learn(env, cfg or LearnerConfig(agent="urs"))[0]


def urs_learn(env: MTDEnv, cfg: LearnerConfig, audit: list | None = None):
    def rule(g):
        return _Fixed([np.full(len(d), 1.0 / len(d)) for d in g.dfn])

    return _baseline_loop(env, cfg, rule, audit)


def bexpq_learn(env: MTDEnv, cfg: LearnerConfig, audit: list | None = None):
    return _baseline_loop(env, cfg, lambda g: _ExpWeights(g, cfg), audit)


def sopt_strategy(spec: GameSpec) -> np.ndarray:
    """State-agnostic optimum: one Bayesian Stackelberg game over target configurations.

    Leader utility of (target c, attack a, type i) is the immediate defender
    utility averaged over current states; likewise for the follower.
    """
    first = spec.defender_actions[0]
    for s in range(spec.n_states):
        if spec.defender_actions[s] != first or first != spec.states:
            raise ValueError("S-OPT needs a configuration-style domain (actions are target states)")
        for i in range(spec.n_types):
            if spec.attacker_actions[s][i] != spec.attacker_actions[0][i]:
                raise ValueError("S-OPT needs state-independent attack sets")
    L = tuple(np.mean([spec.u_defender[s][i] for s in range(spec.n_states)], axis=0) for i in range(spec.n_types))
    F = tuple(np.mean([spec.u_attacker[s][i] for s in range(spec.n_states)], axis=0) for i in range(spec.n_types))
    theta = spec.theta.mean(axis=0)
    return solve_bsse(StageGame(L, F, theta / theta.sum())).x


def sopt_learn(env: MTDEnv, cfg: LearnerConfig, spec: GameSpec, audit: list | None = None):
    x = sopt_strategy(spec)
    return _baseline_loop(env, cfg, lambda g: _Fixed([x] * g.k), audit)


def sopt_policy(spec: GameSpec, env: MTDEnv, cfg: LearnerConfig | None = None) -> StrategyProfile:
    return sopt_learn(env, cfg or LearnerConfig(agent="sopt"), spec)[0]


# ---------------------------------------------------------------------------


def evaluate_policy(
    env: MTDEnv,
    profile: StrategyProfile,
    episodes: int,
    seed: int = 0,
    horizon: int = 50,
    gamma: float = 0.8,
) -> np.ndarray:
    """Monte-Carlo discounted return from every non-terminal state.

    The defender plays x(s) exactly; type i plays the profile's response
    q_i(s). Rollouts stop at a terminal state or after ``horizon`` steps.
    """
    g = _Game(env)
    if len(profile.leader) != g.k:
        raise ValueError("profile does not cover the env's states")
    rng = np.random.default_rng(seed)
    out = np.zeros(g.k)
    for s0 in range(g.k):
        if g.terminal[s0]:
            continue
        total = 0.0
        for _ in range(episodes):
            s, disc, ret = s0, 1.0, 0.0
            for _ in range(horizon):
                if g.terminal[s]:
                    break
                i = g.sample_type(s, rng)
                d = epsilon_greedy_sample(profile.leader[s], 0.0, rng)
                r_d, _, s = g.step(s, d, int(profile.followers[s, i]), i, rng)
                ret += disc * r_d
                disc *= gamma
            total += ret
        out[s0] = total / episodes
    return out


def learn(env: MTDEnv, cfg: LearnerConfig, spec: GameSpec | None = None):
    """Dispatch on ``cfg.agent``; returns (StrategyProfile, LearningCurve)."""
    if cfg.agent == "bssq":
        profile, _, curve = bssq_learn(env, cfg)
        return profile, curve
    if cfg.agent == "nashq":
        return nashq_learn(env, cfg)
    if cfg.agent == "urs":
        return urs_learn(env, cfg)
    if cfg.agent == "bexpq":
        return bexpq_learn(env, cfg)
    if cfg.agent == "sopt":
        if spec is None:
            raise ValueError("S-OPT is computed from the game parameters; pass the GameSpec")
        return sopt_learn(env, cfg, spec)
    raise ValueError(f"unknown agent {cfg.agent!r}")


def with_agent(cfg: LearnerConfig, agent: str, **overrides) -> LearnerConfig:
    return replace(cfg, agent=agent, **overrides)
