"""Synthetic instances with the structure of the two MTD domains.

The real utility tables (mined CVEs with CVSS scores) are not available, so
these builders draw impact/exploitability-like scores from a seeded RNG while
keeping the shape of each domain: four web-stack configurations with
similarity-based switching costs and three attacker types, or a small attack
graph with IDS placements, a no-op and one absorbing goal state.
"""

from __future__ import annotations

import numpy as np

from .game import GameSpec

WEBAPP_CONFIGS = ("(py, MySQL)", "(py, PostgreSQL)", "(Php, MySQL)", "(Php, PostgreSQL)")
WEBAPP_TYPES = ("database hacker", "script kiddie", "mainstream hacker")
WEBAPP_THETA = (0.15, 0.35, 0.50)
DESK_COUNTS = (8, 4, 5)
FULL_COUNTS = (269, 34, 48)
# technologies each type has expertise in
TYPE_TECH = (("MySQL", "PostgreSQL"), ("py", "Php"), ("py", "Php", "MySQL", "PostgreSQL"))
LANG_SWITCH_COST = 2.0
DB_SWITCH_COST = 3.0


def _config_parts(c: str) -> tuple[str, str]:
    lang, db = c.strip("()").split(", ")
    return lang, db


def webapp_switch_costs(configs=WEBAPP_CONFIGS) -> np.ndarray:
    """Dissimilar configurations cost more to switch between."""
    k = len(configs)
    costs = np.zeros((k, k))
    for s, a in enumerate(configs):
        for c, b in enumerate(configs):
            la, da = _config_parts(a)
            lb, db = _config_parts(b)
            costs[s, c] = LANG_SWITCH_COST * (la != lb) + DB_SWITCH_COST * (da != db)
    return costs


def make_webapp_instance(counts=DESK_COUNTS, seed: int = 0, discount: float = 0.8) -> tuple[GameSpec, dict]:
    """Web-app BSMG plus its env block (switching costs, cost_max).

    Attack j of type i targets one technology; it succeeds when the deployed
    configuration (the defender's move target) uses that technology and then
    yields its impact score to the attacker and minus that to the defender.
    The defender also pays the switching cost. All defender rewards are <= 0.
    """
    rng = np.random.default_rng(seed)
    configs = list(WEBAPP_CONFIGS)
    k = len(configs)
    costs = webapp_switch_costs(configs)

    attacks, tech, impact = [], [], []
    for i, n in enumerate(counts):
        techs = TYPE_TECH[i]
        attacks.append([f"CVE-{i + 1}-{j:03d}" for j in range(n)])
        tech.append([techs[j % len(techs)] for j in range(n)])
        impact.append(np.round(rng.uniform(2.9, 10.0, size=n), 1))

    u_d, u_a, trans = [], [], []
    for s in range(k):
        rd, ra, rt = [], [], []
        for i, n in enumerate(counts):
            ud = np.zeros((k, n))
            ua = np.zeros((k, n))
            for c, conf in enumerate(configs):
                hit = np.array([t in _config_parts(conf) for t in tech[i]])
                ua[c] = np.where(hit, impact[i], 0.0)
                ud[c] = -ua[c] - costs[s, c]
            tr = np.zeros((k, n, k))
            for c in range(k):
                tr[c, :, c] = 1.0
            rd.append(ud)
            ra.append(ua)
            rt.append(tr)
        u_d.append(rd)
        u_a.append(ra)
        trans.append(rt)

    spec = GameSpec(
        states=configs,
        attacker_types=WEBAPP_TYPES,
        theta=np.tile(WEBAPP_THETA, (k, 1)),
        defender_actions=[configs] * k,
        attacker_actions=[attacks] * k,
        transitions=trans,
        u_defender=u_d,
        u_attacker=u_a,
        discount=discount,
        start_states=configs,
        terminal_states=[],
    )
    ext = {
        "domain": "webapp",
        "variant": "plain",
        "switch_costs": {a: {b: float(costs[s, c]) for c, b in enumerate(configs)} for s, a in enumerate(configs)},
        "cost_max": float(LANG_SWITCH_COST + DB_SWITCH_COST + 1.0),
        "start_override": None,
    }
    return spec, ext


# ---------------------------------------------------------------------------
# IDS placement on a small cloud attack graph

IDS_STATES = ("LDAP:user", "Web:root", "FTP:user", "FS:admin")
# (exploit name, source state, target state, kind, base score, exploitability)
IDS_EXPLOITS = (
    ("CVE-ldap-escalate", 0, 1, "host", 7.2, 3.9),
    ("CVE-ssh-pivot", 0, 2, "network", 5.3, 8.6),
    ("CVE-web-dbdump", 1, 3, "host", 9.8, 3.9),
    ("CVE-web-lateral", 1, 2, "network", 6.1, 8.6),
    ("CVE-ftp-bof", 2, 3, "network", 8.8, 3.9),
    ("CVE-ftp-traversal", 2, 3, "host", 6.5, 8.6),
)
# (IDS name, state, kind it detects, performance cost)
IDS_SENSORS = (
    ("HIDS-ldap", 0, "host", 1.2),
    ("NIDS-dmz", 0, "network", 0.8),
    ("HIDS-web", 1, "host", 1.5),
    ("NIDS-web", 1, "network", 1.0),
    ("NIDS-ftp", 2, "network", 1.0),
    ("HIDS-ftp", 2, "host", 1.4),
)
EXPLOIT_SUCCESS = 0.9
DETECT_SCALE = 0.5


def make_ids_instance(discount: float = 0.8) -> tuple[GameSpec, dict]:
    """Single-type IDS-placement game with one absorbing goal state.

    A detected exploit rewards the defender in proportion to its
    exploitability (the attacker's effort) and leaves the attacker where it
    was. An undetected one costs the defender its base score, pays the
    attacker the same, and moves the attacker on with probability
    EXPLOIT_SUCCESS. Placing a sensor costs the defender its performance
    cost either way.
    """
    k = len(IDS_STATES)
    goal = k - 1
    d_actions, a_actions, u_d, u_a, trans = [], [], [], [], []
    for s in range(k):
        sensors = [x for x in IDS_SENSORS if x[1] == s]
        exploits = [x for x in IDS_EXPLOITS if x[1] == s]
        if s == goal:
            d_actions.append(["no-op"])
            a_actions.append([["stay"]])
            u_d.append([np.zeros((1, 1))])
            u_a.append([np.zeros((1, 1))])
            tr = np.zeros((1, 1, k))
            tr[0, 0, s] = 1.0
            trans.append([tr])
            continue
        d_actions.append(["no-op"] + [x[0] for x in sensors])
        a_actions.append([[x[0] for x in exploits]])
        nd, na = len(d_actions[-1]), len(exploits)
        ud, ua, tr = np.zeros((nd, na)), np.zeros((nd, na)), np.zeros((nd, na, k))
        for d in range(nd):
            kind, cost = (None, 0.0) if d == 0 else (sensors[d - 1][2], sensors[d - 1][3])
            for a, (_, _, target, a_kind, base, expl) in enumerate(exploits):
                if kind == a_kind:
                    ud[d, a] = DETECT_SCALE * expl - cost
                    ua[d, a] = -DETECT_SCALE * expl
                    tr[d, a, s] = 1.0
                else:
                    ud[d, a] = -base - cost
                    ua[d, a] = base
                    tr[d, a, target] = EXPLOIT_SUCCESS
                    tr[d, a, s] = 1.0 - EXPLOIT_SUCCESS
        u_d.append([ud])
        u_a.append([ua])
        trans.append([tr])

    spec = GameSpec(
        states=IDS_STATES,
        attacker_types=("attacker",),
        theta=np.ones((k, 1)),
        defender_actions=d_actions,
        attacker_actions=a_actions,
        transitions=trans,
        u_defender=u_d,
        u_attacker=u_a,
        discount=discount,
        start_states=[IDS_STATES[0]],
        terminal_states=[IDS_STATES[goal]],
    )
    return spec, {"domain": "ids", "start_override": None}


def make_unit_instance() -> GameSpec:
    """One state, one action each, reward 1 on a self-loop; V^D = 1/(1-0.8) = 5."""
    return GameSpec(
        states=["s0"],
        attacker_types=["A1"],
        theta=[[1.0]],
        defender_actions=[["d0"]],
        attacker_actions=[[["a0"]]],
        transitions=[[np.ones((1, 1, 1))]],
        u_defender=[[np.ones((1, 1))]],
        u_attacker=[[np.ones((1, 1))]],
        discount=0.8,
        start_states=["s0"],
    )
