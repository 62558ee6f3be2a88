"""Command-line entry point: ``bsmg validate|solve|oracle|learn|compare``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .envs import StructureError, env_from_instance
from .game import (
    QTables,
    SpecError,
    build_stage_game,
    read_instance,
    spec_from_dict,
    validate,
)
from .harness import ConfigError, curve_records, emit_csv, emit_plots, load_config, run_experiment, write_outputs
from .learners import AGENTS, LearnerConfig, learn
from .oracle import value_iteration
from .stage import solve_bsse


def _instance(path: str):
    data = read_instance(path)
    return data, spec_from_dict(data)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def cmd_validate(args) -> int:
    data = read_instance(args.instance)
    spec = spec_from_dict(data, check=False)
    problems = validate(spec)
    for p in problems:
        print(f"{args.instance}: {p}")
    if problems:
        return 1
    print(f"{args.instance}: ok ({spec.n_states} states, {spec.n_types} attacker type{'' if spec.n_types == 1 else 's'})")
    return 0


def cmd_solve(args) -> int:
    """SSE of one stage game built from the immediate utilities."""
    _, spec = _instance(args.instance)
    state = args.state
    if state not in spec.states and state.isdigit():
        state = int(state)
    s = spec.index_of(state)
    if spec.is_terminal(s):
        raise SpecError(f"state {spec.states[s]} is terminal; it has no stage game")
    sol = solve_bsse(build_stage_game(spec, _immediate(spec), s))
    print(f"state {spec.states[s]}")
    for a, p in zip(spec.defender_actions[s], sol.x):
        print(f"  x[{a}] = {p:.6f}")
    for i, j in enumerate(sol.responses):
        print(f"  {spec.attacker_types[i]} -> {spec.attacker_actions[s][i][j]} (value {sol.v_followers[i]:.6f})")
    print(f"v_leader = {sol.v_leader:.6g}")
    if args.out:
        _write_json(Path(args.out), {
            "state": spec.states[s],
            "x": sol.x.tolist(),
            "responses": list(sol.responses),
            "v_leader": sol.v_leader,
            "v_followers": list(sol.v_followers),
        })
    return 0


def _immediate(spec) -> QTables:
    return QTables(tuple(tuple(r) for r in spec.u_defender), tuple(tuple(r) for r in spec.u_attacker))


def cmd_oracle(args) -> int:
    _, spec = _instance(args.instance)
    res = value_iteration(spec, tol=args.tol, max_iter=args.max_iter)
    status = "converged" if res.converged else "did NOT converge"
    print(f"value iteration {status} after {res.iterations} iterations (last change {res.diffs[-1]:.3g})")
    for k, s in enumerate(spec.states):
        print(f"V^D({s}) = {res.values.v_defender[k]:.6f}")
    out = Path(args.out) if args.out else Path(args.instance).with_suffix(".oracle.json")
    _write_json(out, {
        "converged": res.converged,
        "iterations": res.iterations,
        "v_defender": dict(zip(spec.states, res.values.v_defender.tolist())),
        "v_attacker": {s: row.tolist() for s, row in zip(spec.states, res.values.v_attacker)},
        "strategy": {s: x.tolist() for s, x in zip(spec.states, res.profile.leader)},
        "responses": {s: row.tolist() for s, row in zip(spec.states, res.profile.followers)},
    })
    print(f"wrote {out}")
    return 0 if res.converged else 2


def cmd_learn(args) -> int:
    data, spec = _instance(args.instance)
    env = env_from_instance(data, args.kind) if args.kind else env_from_instance(data)
    opts = {k: getattr(args, k) for k in ("episodes", "max_episode_len", "alpha", "gamma", "epsilon_start", "epsilon_end", "alpha_decay")}
    opts = {k: v for k, v in opts.items() if v is not None}
    cfg = LearnerConfig(agent=args.agent, seed=args.seed, **opts)
    profile, curve = learn(env, cfg, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = curve_records(curve, args.agent, [env.is_end(s) for s in curve.states])
    emit_csv(records, out / "records.csv")
    emit_plots(records, out, title=args.agent)
    _write_json(out / "profile.json", {
        "agent": args.agent,
        "strategy": {s: x.tolist() for s, x in zip(curve.states, profile.leader)},
        "responses": {s: row.tolist() for s, row in zip(curve.states, profile.followers)},
        "final_v_defender": dict(zip(curve.states, curve.final.tolist())),
    })
    for s, v in zip(curve.states, curve.final):
        if not env.is_end(s):
            print(f"V^D({s}) = {v:.6f}")
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out or "results")
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    records, summary = run_experiment(cfg)
    plots = write_outputs(records, summary, out, cfg)
    for agent, entry in summary.items():
        cells = ", ".join(f"{s}: {v['mean']:.3f} +- {v['std']:.3f}" for s, v in entry["states"].items())
        wall = entry.get("wall_time_s", {})
        print(f"{agent:6s} final V^D  {cells}  [{wall.get('mean', 0.0):.2f}s per trial]")
    print(f"wrote {out / 'records.csv'}, {out / 'summary.json'} and {len(plots)} plots")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsmg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check an instance file")
    v.add_argument("instance")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="SSE of one state's immediate-utility stage game")
    s.add_argument("instance")
    s.add_argument("--state", required=True, help="state name or index")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="SSE value iteration on a known game")
    o.add_argument("instance")
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--max-iter", type=int, default=1000)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    l = sub.add_parser("learn", help="one learner run")
    l.add_argument("instance")
    l.add_argument("--agent", choices=AGENTS, default="bssq")
    l.add_argument("--episodes", type=int)
    l.add_argument("--seed", type=int, default=0)
    l.add_argument("--out", required=True)
    l.add_argument("--max-episode-len", type=int)
    l.add_argument("--alpha", type=float)
    l.add_argument("--alpha-decay", type=float)
    l.add_argument("--gamma", type=float)
    l.add_argument("--epsilon-start", type=float)
    l.add_argument("--epsilon-end", type=float)
    l.add_argument("--kind", choices=("webapp", "ids", "generic"))
    l.set_defaults(func=cmd_learn)

    c = sub.add_parser("compare", help="multi-trial comparison from a config file")
    c.add_argument("config")
    c.add_argument("--out")
    c.add_argument("--jobs", type=int)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, StructureError, ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"bsmg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
