import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsmg.envs import MTDEnv, make_ids_env, make_webapp_env
from bsmg.game import EXTENSION_KEY, GameSpec, StageGame, StrategyProfile, build_stage_game, generate_random_bsmg, spec_to_dict
from bsmg.instances import make_ids_instance, make_unit_instance, make_webapp_instance
from bsmg.learners import (
    LearnerConfig,
    attacker_best_response,
    bexpq_learn,
    bssq_learn,
    epsilon_greedy_sample,
    evaluate_policy,
    learn,
    nashq_learn,
    q_update,
    sopt_strategy,
    urs_learn,
    urs_policy,
    with_agent,
)
from bsmg.oracle import value_iteration
from bsmg.stage import solve_bsse

from api_client import within_3sigma


def instance(spec, ext):
    data = spec_to_dict(spec)
    data[EXTENSION_KEY] = ext
    return data


@pytest.fixture(scope="module")
def ids_env():
    return make_ids_env(instance(*make_ids_instance()))


@pytest.fixture(scope="module")
def webapp():
    return make_webapp_instance()


# -- primitive rules -----------------------------------------------------------


def test_q_update_arithmetic():
    assert q_update(0.0, -2.0, -1.0, 0.06, 0.8) == pytest.approx(-0.168)
    assert q_update(3.0, 7.5, 100.0, 1.0, 0.0) == 7.5
    assert q_update(3.0, 7.5, 100.0, 1e-12, 0.8) == pytest.approx(3.0)


def test_epsilon_greedy_pure():
    rng = np.random.default_rng(0)
    assert {epsilon_greedy_sample([1, 0, 0], 0.0, rng) for _ in range(1000)} == {0}


def test_epsilon_greedy_uniform():
    rng = np.random.default_rng(1)
    n = 100_000
    draws = np.bincount([epsilon_greedy_sample([1, 0, 0], 1.0, rng) for _ in range(n)], minlength=3)
    assert all(within_3sigma(c, n, 1 / 3) for c in draws)


def test_epsilon_greedy_mixture():
    rng = np.random.default_rng(2)
    n = 100_000
    zeros = sum(epsilon_greedy_sample([0.7, 0.3], 0.1, rng) == 0 for _ in range(n))
    assert within_3sigma(zeros, n, 0.68)


def test_attacker_best_response():
    Q = np.array([[1.0, 3.0, 3.0], [5.0, 0.0, 1.0]])
    assert attacker_best_response(Q, [1, 0]) == 1  # tie between 1 and 2
    assert attacker_best_response(Q, [0, 1]) == 0
    with pytest.raises(ValueError):
        attacker_best_response(Q, [1.0])


def test_config_validation():
    with pytest.raises(ValueError, match="alpha"):
        LearnerConfig(alpha=1.5)
    with pytest.raises(ValueError, match="epsilon"):
        LearnerConfig(epsilon_start=0.05, epsilon_end=0.1)
    with pytest.raises(ValueError):
        LearnerConfig(episodes=0)
    with pytest.raises(ValueError, match="agent"):
        LearnerConfig(agent="ppo")
    cfg = LearnerConfig(episodes=10, epsilon_start=0.1, epsilon_end=0.05)
    assert cfg.epsilon(0) == 0.1 and cfg.epsilon(5) == pytest.approx(0.05) and cfg.epsilon(9) == pytest.approx(0.05)
    assert with_agent(cfg, "urs").agent == "urs"


# -- BSS-Q --------------------------------------------------------------------------


def test_unit_env_value():
    profile, q, curve = bssq_learn(MTDEnv(make_unit_instance()), LearnerConfig(episodes=50, max_episode_len=10))
    assert curve.final[0] == pytest.approx(5.0, rel=0.02)
    assert q.q_defender[0][0][0, 0] == pytest.approx(curve.final[0])


def test_alpha_zero_freezes_q():
    spec = generate_random_bsmg(3, 2, 2, 2, seed=4)
    _, q, curve = bssq_learn(MTDEnv(spec), LearnerConfig(episodes=30, alpha=0.0))
    assert not any(np.any(m) for rows in (q.q_defender, q.q_attacker) for row in rows for m in row)
    assert not curve.as_array().any()


def test_bssq_deterministic(ids_env):
    cfg = LearnerConfig(episodes=20, seed=3)
    a, qa, ca = bssq_learn(ids_env, cfg)
    b, qb, cb = bssq_learn(ids_env, cfg)
    assert np.array_equal(ca.as_array(), cb.as_array())
    assert all(np.array_equal(x, y) for x, y in zip(a.leader, b.leader))


def test_only_visited_cell_changes():
    spec = generate_random_bsmg(3, 2, 3, 2, seed=8)
    env = MTDEnv(spec)
    trace = []
    cfg = LearnerConfig(episodes=1, max_episode_len=1, seed=2)
    _, q, _ = bssq_learn(env, cfg, trace=trace)
    assert len(trace) == 1
    s, i, d, a = trace[0]
    for tables in (q.q_defender, q.q_attacker):
        for ss, row in enumerate(tables):
            for ii, m in enumerate(row):
                nz = {tuple(ix) for ix in np.argwhere(m != 0)}
                assert nz <= ({(d, a)} if (ss, ii) == (s, i) else set())


def test_curve_strategies_on_simplex(webapp):
    env = make_webapp_env(instance(*webapp))
    _, _, curve = bssq_learn(env, LearnerConfig(episodes=15, seed=1))
    assert curve.episodes == list(range(15))
    for snap in curve.strategies:
        for x in snap:
            assert np.all(x >= -1e-9) and abs(x.sum() - 1) <= 1e-9


def test_final_profile_is_stage_equilibrium(ids_env):
    profile, q, curve = bssq_learn(ids_env, LearnerConfig(episodes=40, seed=0))
    spec, _ = make_ids_instance()
    for s in range(3):
        sol = solve_bsse(build_stage_game(spec, q, s))
        np.testing.assert_allclose(sol.x, profile.leader[s])
        assert sol.v_leader == pytest.approx(curve.final[s])


def test_bssq_close_to_oracle_on_small_spec():
    spec = generate_random_bsmg(2, 2, 2, 2, seed=0)
    oracle = value_iteration(spec)
    assert oracle.converged
    cfg = dict(episodes=2000, max_episode_len=3, alpha=1.0, alpha_decay=0.1, epsilon_start=1.0, epsilon_end=1.0)
    finals = [bssq_learn(MTDEnv(spec), LearnerConfig(seed=sd, **cfg))[2].final for sd in range(3)]
    err = np.abs(np.mean(finals, axis=0) - oracle.values.v_defender) / np.abs(oracle.values.v_defender)
    assert np.all(err <= 0.05)


# -- baselines ---------------------------------------------------------------------


def test_urs_is_uniform_and_attacker_rational(webapp):
    env = make_webapp_env(instance(*webapp))
    audit = []
    profile, _ = urs_learn(env, LearnerConfig(agent="urs", episodes=10, seed=0), audit)
    for x in profile.leader:
        np.testing.assert_allclose(x, 0.25)
    for s, i, x, qa, br, a in audit:
        vals = x @ qa
        assert vals[br] >= vals.max() - 1e-12
        assert br == int(np.flatnonzero(vals >= vals.max() - 1e-12)[0])
    assert urs_policy(env).leader[0].tolist() == [0.25] * 4


def test_bexpq_zero_rewards_stay_uniform():
    spec = generate_random_bsmg(2, 1, 3, 2, reward_range=(0, 0), seed=0)
    profile, curve = bexpq_learn(MTDEnv(spec), LearnerConfig(agent="bexpq", episodes=30))
    for x in profile.leader:
        np.testing.assert_allclose(x, 1 / 3)
    assert not curve.as_array().any()


def test_single_action_strategy_is_point_mass():
    env = MTDEnv(make_unit_instance())
    for agent in ("bexpq", "urs", "bssq", "nashq"):
        profile, _ = learn(env, LearnerConfig(agent=agent, episodes=5))
        assert profile.leader[0].tolist() == [1.0]


def test_nashq_matches_bssq_on_single_action_env():
    env = MTDEnv(make_unit_instance())
    cfg = LearnerConfig(episodes=40)
    _, c_nash = nashq_learn(env, with_agent(cfg, "nashq"))
    _, _, c_bssq = bssq_learn(env, cfg)
    np.testing.assert_allclose(c_nash.as_array(), c_bssq.as_array())


def test_nashq_on_ids(ids_env):
    profile, curve = nashq_learn(ids_env, LearnerConfig(agent="nashq", episodes=10))
    assert curve.as_array().shape == (10, 4)
    assert curve.as_array()[:, 3].tolist() == [0.0] * 10
    with pytest.raises(ValueError):
        nashq_learn(MTDEnv(generate_random_bsmg(2, 2, 2, 2, seed=0)), LearnerConfig(agent="nashq"))


def test_sopt_state_independent_utilities():
    # one state's payoffs copied everywhere: S-OPT is the stage SSE of that state
    spec, _ = make_webapp_instance()
    u_d = [list(spec.u_defender[0]) for _ in range(4)]
    u_a = [list(spec.u_attacker[0]) for _ in range(4)]
    flat = GameSpec(
        states=spec.states, attacker_types=spec.attacker_types, theta=spec.theta,
        defender_actions=spec.defender_actions, attacker_actions=spec.attacker_actions,
        transitions=spec.transitions, u_defender=u_d, u_attacker=u_a,
        discount=spec.discount, start_states=spec.start_states, terminal_states=spec.terminal_states,
    )
    want = solve_bsse(StageGame(tuple(u_d[0]), tuple(u_a[0]), spec.theta[0])).x
    np.testing.assert_allclose(sopt_strategy(flat), want, atol=1e-12)


def test_sopt_rejects_other_domains():
    with pytest.raises(ValueError):
        sopt_strategy(make_ids_instance()[0])
    with pytest.raises(ValueError):
        learn(MTDEnv(make_unit_instance()), LearnerConfig(agent="sopt"))


# -- evaluation ------------------------------------------------------------------------


def chain_env(gamma=0.8):
    """s0 -> s1 -> s2 (terminal) with rewards 1 and 2."""
    tr = [np.zeros((1, 1, 3)) for _ in range(3)]
    tr[0][0, 0, 1] = tr[1][0, 0, 2] = tr[2][0, 0, 2] = 1.0
    return MTDEnv(GameSpec(
        states=["s0", "s1", "s2"], attacker_types=["A"], theta=[[1.0]] * 3,
        defender_actions=[["d"]] * 3, attacker_actions=[[["a"]]] * 3,
        transitions=[[t] for t in tr],
        u_defender=[[np.full((1, 1), r)] for r in (1.0, 2.0, 0.0)],
        u_attacker=[[np.zeros((1, 1))]] * 3,
        discount=gamma, start_states=["s0"], terminal_states=["s2"],
    ))


def test_evaluate_deterministic_chain():
    prof = StrategyProfile((np.ones(1),) * 3, np.zeros((3, 1), dtype=int))
    v = evaluate_policy(chain_env(), prof, episodes=3)
    assert v.tolist() == [1.0 + 0.8 * 2.0, 2.0, 0.0]


def test_evaluate_variance_shrinks():
    spec = generate_random_bsmg(2, 1, 1, 1, seed=5)
    env = MTDEnv(spec)
    res = value_iteration(spec)
    few = np.array([evaluate_policy(env, res.profile, 1, seed=k)[0] for k in range(200)])
    many = np.array([evaluate_policy(env, res.profile, 100, seed=1000 + k)[0] for k in range(30)])
    ratio = few.var() / many.var()
    assert 30 < ratio < 300  # ~100 expected


def test_evaluate_matches_oracle(ids_env):
    spec, _ = make_ids_instance()
    res = value_iteration(spec)
    v = evaluate_policy(ids_env, res.profile, episodes=10_000, seed=0)
    np.testing.assert_allclose(v[:3], res.values.v_defender[:3], rtol=0.02)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_bssq_strategies_stay_on_simplex(seed):
    spec = generate_random_bsmg(2, 2, 3, 2, seed=seed, n_terminal=0)
    profile, _, curve = bssq_learn(MTDEnv(spec), LearnerConfig(episodes=5, seed=seed))
    for snap in curve.strategies:
        for x in snap:
            assert np.all(x >= -1e-9) and abs(x.sum() - 1) <= 1e-9
    assert profile.check(spec) == []
