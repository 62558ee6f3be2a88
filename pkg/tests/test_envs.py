import json

import numpy as np
import pytest

from bsmg.envs import (
    ExposureError,
    MTDEnv,
    ProtocolError,
    StructureError,
    env_from_instance,
    make_ids_env,
    make_webapp_env,
    spec_of,
    switch_cost_matrix,
)
from bsmg.game import EXTENSION_KEY, GameSpec, generate_random_bsmg, spec_to_dict
from bsmg.instances import (
    DESK_COUNTS,
    FULL_COUNTS,
    IDS_STATES,
    WEBAPP_CONFIGS,
    make_ids_instance,
    make_webapp_instance,
)

from api_client import conformance_report, within_3sigma


def as_instance(spec, ext=None):
    data = spec_to_dict(spec)
    if ext is not None:
        data[EXTENSION_KEY] = ext
    return data


@pytest.fixture(scope="module")
def webapp():
    return as_instance(*make_webapp_instance())


@pytest.fixture(scope="module")
def ids():
    return as_instance(*make_ids_instance())


def test_webapp_conforms(webapp):
    assert conformance_report(make_webapp_env(webapp)) == []


def test_ids_conforms(ids):
    assert conformance_report(make_ids_env(ids)) == []


def test_threshold_variant_conforms(webapp):
    assert conformance_report(make_webapp_env(webapp, "threshold")) == []


def test_webapp_shape(webapp):
    env = make_webapp_env(webapp)
    assert env.get_states() == list(WEBAPP_CONFIGS)
    att, dfn = env.get_actions()
    assert tuple(len(a) for a in att) == DESK_COUNTS
    assert dfn == list(WEBAPP_CONFIGS)
    assert not any(env.is_end(s) for s in env.get_states())


def test_full_scale_action_counts():
    env = make_webapp_env(as_instance(*make_webapp_instance(FULL_COUNTS)))
    att, _ = env.get_actions()
    assert tuple(len(a) for a in att) == FULL_COUNTS == (269, 34, 48)


def test_ids_shape(ids):
    env = make_ids_env(ids)
    assert env.get_states() == list(IDS_STATES)
    assert [env.is_end(s) for s in IDS_STATES] == [False, False, False, True]
    for s in IDS_STATES:
        assert "no-op" in env.get_actions(s)[1]
    assert len(env.attacker_types()) == 1


def test_webapp_attack_reward_is_impact(webapp):
    spec, _ = make_webapp_instance()
    env = make_webapp_env(webapp)
    rng = np.random.default_rng(0)
    att, _ = env.get_actions()
    for i, acts in enumerate(att):
        for j, a in enumerate(acts):
            for c, conf in enumerate(WEBAPP_CONFIGS):
                out = env.act(WEBAPP_CONFIGS[0], conf, a, i, rng)
                assert out.r_attacker == spec.u_attacker[0][i][c, j]
                assert out.next_state == conf  # plain switches always succeed
                assert out.r_defender <= 0


def test_ids_detection_pays_defender(ids):
    env = make_ids_env(ids)
    out = env.act("LDAP:user", "HIDS-ldap", "CVE-ldap-escalate", 0, np.random.default_rng(0))
    assert out.r_defender > 0 and out.next_state == "LDAP:user"


def test_ids_terminal_absorbs(ids):
    env = make_ids_env(ids)
    with pytest.raises(ProtocolError):
        env.act("FS:admin", "no-op", "stay", 0)


def test_unknown_inputs_raise_assertion_errors(ids):
    env = make_ids_env(ids)
    with pytest.raises(AssertionError):
        env.is_end("Mars:root")
    with pytest.raises(AssertionError):
        env.act("LDAP:user", "no-op", "CVE-ftp-bof", 0)
    with pytest.raises(AssertionError):
        env.act("LDAP:user", "NIDS-ftp", "CVE-ldap-escalate", 0)


def test_stochastic_transition_frequency():
    spec = generate_random_bsmg(3, 1, 1, 1, seed=3)
    env = MTDEnv(spec)
    rng = np.random.default_rng(1)
    n = 10_000
    nxt = [env.act("s0", "d0", "a0", 0, rng).next_state for _ in range(n)]
    for k, s in enumerate(spec.states):
        assert within_3sigma(nxt.count(s), n, spec.transitions[0][0][0, 0, k])


def test_start_override(webapp):
    env = make_webapp_env(webapp, start_states=["(py, PostgreSQL)", "(Php, MySQL)"])
    rng = np.random.default_rng(0)
    draws = [env.get_start_state(rng) for _ in range(10_000)]
    assert set(draws) == {"(py, PostgreSQL)", "(Php, MySQL)"}
    assert within_3sigma(draws.count("(Php, MySQL)"), 10_000, 0.5)
    env.start_states = ["(py, MySQL)"]
    assert {env.get_start_state(rng) for _ in range(50)} == {"(py, MySQL)"}
    with pytest.raises(ValueError):
        env.start_states = []
    with pytest.raises(ProtocolError):
        env.start_states = ["elsewhere"]


def test_start_override_from_env_block(webapp):
    data = json.loads(json.dumps(webapp))
    data[EXTENSION_KEY]["start_override"] = ["(Php, PostgreSQL)"]
    env = env_from_instance(data)
    assert env.start_states == ["(Php, PostgreSQL)"]


def test_ids_terminal_cannot_start(ids):
    with pytest.raises(ValueError):
        make_ids_env(ids, start_states=["FS:admin"])


def test_exposure(webapp):
    spec, _ = make_webapp_instance()
    with pytest.raises(ExposureError):
        spec_of(make_webapp_env(webapp))
    assert spec_of(make_webapp_env(webapp, exposure="oracle")) == spec
    assert spec_of(MTDEnv(spec, exposure="oracle")) == spec


def test_threshold_stay_probabilities(webapp):
    """Empirical stay rate of each switch s -> c matches min(1, cost/cost_max) at 3 sigma."""
    env = make_webapp_env(webapp, "threshold")
    spec, ext = make_webapp_instance()
    costs = switch_cost_matrix(spec, ext["switch_costs"])
    cmax = ext["cost_max"]
    rng = np.random.default_rng(11)
    att = env.get_actions()[0][0][0]
    n = 100_000
    for s, src in enumerate(WEBAPP_CONFIGS):
        for c, dst in enumerate(WEBAPP_CONFIGS):
            if s == c:
                continue
            stays = sum(env.act(src, dst, att, 0, rng).next_state == src for _ in range(n))
            assert within_3sigma(stays, n, min(1.0, costs[s, c] / cmax)), (src, dst)


def test_threshold_boundaries():
    spec, ext = make_webapp_instance()
    ext = dict(ext, cost_max=3.0)  # language switch (2) mid-range, db switch (3) at the cap
    env = make_webapp_env(as_instance(spec, ext), "threshold")
    rng = np.random.default_rng(0)
    a = env.get_actions()[0][0][0]
    assert all(env.act("(py, MySQL)", "(py, MySQL)", a, 0, rng).next_state == "(py, MySQL)" for _ in range(200))
    assert all(env.act("(py, MySQL)", "(py, PostgreSQL)", a, 0, rng).next_state == "(py, MySQL)" for _ in range(200))


def test_threshold_rewards_carry_no_switch_cost():
    spec, ext = make_webapp_instance()
    env = make_webapp_env(as_instance(spec, ext), "threshold", exposure="oracle")
    tspec = spec_of(env)
    # with the attack missing every technology, the only defender loss would be a switch cost
    costs = switch_cost_matrix(spec, ext["switch_costs"])
    for s in range(4):
        for i in range(3):
            plain = spec.u_defender[s][i] + costs[s][:, None]
            assert np.all(tspec.u_defender[s][i] >= plain.min() - 1e-12)
            assert np.all(tspec.u_defender[s][i] <= 0)
    assert np.allclose(tspec.u_defender[0][0][0], spec.u_defender[0][0][0])


def test_structure_checks():
    spec = generate_random_bsmg(4, 1, 4, 2, seed=0)
    with pytest.raises(StructureError):
        make_webapp_env(as_instance(spec))
    with pytest.raises(StructureError):
        make_ids_env(as_instance(spec))
    webapp_spec, ext = make_webapp_instance()
    with pytest.raises(StructureError):
        make_webapp_env(as_instance(webapp_spec, {k: v for k, v in ext.items() if k != "cost_max"}), "threshold")
    with pytest.raises(StructureError):
        make_webapp_env(as_instance(webapp_spec, ext), "sideways")


def test_ids_unreachable_goal_rejected():
    spec, ext = make_ids_instance()
    tr = [[t.copy() for t in row] for row in spec.transitions]
    for s in range(3):
        t = tr[s][0]
        t[:] = 0.0
        t[..., s] = 1.0
    broken = GameSpec(
        states=spec.states, attacker_types=spec.attacker_types, theta=spec.theta,
        defender_actions=spec.defender_actions, attacker_actions=spec.attacker_actions,
        transitions=tr, u_defender=spec.u_defender, u_attacker=spec.u_attacker,
        discount=spec.discount, start_states=spec.start_states, terminal_states=spec.terminal_states,
    )
    with pytest.raises(StructureError, match="unreachable"):
        make_ids_env(as_instance(broken, ext))


def test_same_seed_same_trajectory(ids):
    def run(seed):
        env = make_ids_env(ids, seed=seed)
        s, path = env.get_start_state(), []
        for _ in range(30):
            if env.is_end(s):
                break
            att, dfn = env.get_actions(s)
            out = env.act(s, dfn[0], att[0][0], 0)
            path.append((out.r_defender, out.next_state))
            s = out.next_state
        return path

    assert run(4) == run(4)


def test_episodes_end_in_ids_only(webapp, ids):
    rng = np.random.default_rng(0)
    for env, can_end in ((make_webapp_env(webapp), False), (make_ids_env(ids), True)):
        ended = 0
        for _ in range(100):
            s = env.get_start_state(rng)
            for _ in range(50):
                if env.is_end(s):
                    ended += 1
                    break
                att, dfn = env.get_actions(s)
                s = env.act(s, dfn[0], att[0][0], 0, rng).next_state
        assert (ended > 0) == can_end
