"""Multi-trial comparisons of learners: records, summaries, CSV and SVG output."""

from __future__ import annotations

import csv
import json
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from os import PathLike
from pathlib import Path

import numpy as np

from .envs import env_from_instance
from .game import EXTENSION_KEY, GameSpec, read_instance, spec_from_dict
from .learners import AGENTS, LearnerConfig, learn, sopt_strategy
from .stage import NASH_MAX_ACTIONS

CSV_COLUMNS = ("trial", "episode", "state", "agent", "v_defender", "wall_time_s")
_LEARNER_FIELDS = {f.name for f in fields(LearnerConfig)} - {"agent", "seed"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str
    agents: tuple[str, ...]
    trials: int = 1
    base_seed: int = 0
    out: str | None = None
    record_every: int = 1
    # LearnerConfig fields shared by every agent, then per-agent overrides
    learner: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    kind: str | None = None
    variant: str | None = None
    jobs: int = 1
    # wall times go to the CSV only when asked; otherwise the CSV is reproducible byte for byte
    record_timing: bool = False

    def learner_config(self, agent: str, trial: int) -> LearnerConfig:
        opts = {**self.learner, **self.overrides.get(agent, {})}
        opts.setdefault("record_every", self.record_every)
        return LearnerConfig(agent=agent, seed=self.base_seed + trial, **opts)


@dataclass(frozen=True)
class RunRecord:
    trial: int
    episode: int
    state: str
    agent: str
    v_defender: float
    wall_time_s: float


def config_from_dict(data: dict, base_dir: str | PathLike | None = None) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("instance", "agents"):
        if key not in data:
            raise ConfigError(f"config is missing {key!r}")
    data = dict(data)
    data["agents"] = tuple(data["agents"])
    inst = Path(data["instance"])
    if base_dir is not None and not inst.is_absolute():
        inst = Path(base_dir) / inst
    data["instance"] = str(inst)
    return ExperimentConfig(**data)


def load_config(path: str | PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return config_from_dict(data, base_dir=path.parent)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def check_config(cfg: ExperimentConfig) -> tuple[GameSpec, dict]:
    """Everything that can fail before a run starts; returns the parsed instance."""
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if not cfg.agents:
        raise ConfigError("agents must be nonempty")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    for a in cfg.agents:
        if a not in AGENTS:
            raise ConfigError(f"unknown agent {a!r}; expected one of {AGENTS}")
    for name, opts in [("learner", cfg.learner)] + [(f"overrides.{a}", o) for a, o in cfg.overrides.items()]:
        bad = set(opts) - _LEARNER_FIELDS
        if bad:
            raise ConfigError(f"{name}: unknown learner fields {sorted(bad)}")
    for a in cfg.overrides:
        if a not in cfg.agents:
            raise ConfigError(f"overrides given for agent {a!r} that is not being run")
    if not Path(cfg.instance).is_file():
        raise ConfigError(f"instance {cfg.instance} does not exist")
    data = read_instance(cfg.instance)
    spec = spec_from_dict(data)
    env = _make_env(cfg, data)
    for a in cfg.agents:
        try:
            cfg.learner_config(a, 0)
        except ValueError as exc:
            raise ConfigError(f"agent {a}: {exc}") from exc
        if a == "sopt":
            sopt_strategy(spec)
        if a == "nashq":
            if spec.n_types != 1:
                raise ConfigError("nashq needs a single attacker type")
            for s in env.get_states():
                att, dfn = env.get_actions(s)
                if max(len(dfn), len(att[0])) > NASH_MAX_ACTIONS:
                    raise ConfigError(f"nashq: state {s} exceeds the {NASH_MAX_ACTIONS}-action limit")
    return spec, data


def _make_env(cfg: ExperimentConfig, data: dict):
    kw = {} if cfg.variant is None else {"variant": cfg.variant}
    return env_from_instance(data, cfg.kind, **kw)


def _run_cell(cfg: ExperimentConfig, data: dict, agent: str, trial: int):
    spec = spec_from_dict(data)
    env = _make_env(cfg, data)
    lc = cfg.learner_config(agent, trial)
    t0 = time.perf_counter()
    _, curve = learn(env, lc, spec)
    wall = time.perf_counter() - t0
    terminal = [env.is_end(s) for s in curve.states]
    rows = curve_records(curve, agent, terminal, trial, wall if cfg.record_timing else 0.0)
    return agent, trial, rows, wall


def curve_records(curve, agent: str, terminal, trial: int = 0, wall: float = 0.0) -> list[RunRecord]:
    """Flatten a learning curve into rows, skipping terminal states."""
    keep = [k for k, t in enumerate(terminal) if not t]
    return [
        RunRecord(trial, ep, curve.states[k], agent, float(vals[k]), wall)
        for ep, vals in zip(curve.episodes, curve.values)
        for k in keep
    ]


def run_experiment(cfg: ExperimentConfig) -> tuple[list[RunRecord], dict]:
    _, data = check_config(cfg)
    cells = [(a, t) for a in cfg.agents for t in range(cfg.trials)]
    if cfg.jobs == 1:
        results = [_run_cell(cfg, data, a, t) for a, t in cells]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_run_cell, cfg, data, a, t) for a, t in cells]
            results = [f.result() for f in futures]
    records = [r for _, _, rows, _ in results for r in rows]
    walls = {a: [w for b, _, _, w in results if b == a] for a in cfg.agents}
    return records, summarize(records, walls)


def summarize(records: list[RunRecord], walls: dict | None = None) -> dict:
    """Per-agent, per-state mean and std (across trials) of the last recorded value."""
    out: dict = {}
    agents = list(dict.fromkeys(r.agent for r in records))
    for a in agents:
        rows = [r for r in records if r.agent == a]
        last = max(r.episode for r in rows)
        states = list(dict.fromkeys(r.state for r in rows))
        per_state = {}
        for s in states:
            v = np.array([r.v_defender for r in rows if r.state == s and r.episode == last])
            per_state[s] = {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}
        entry = {"final_episode": last, "states": per_state}
        if walls and a in walls:
            w = np.array(walls[a])
            entry["wall_time_s"] = {"mean": float(w.mean()), "std": float(w.std())}
        out[a] = entry
    return out


# ---------------------------------------------------------------------------
# output


def emit_csv(records: list[RunRecord], path: str | PathLike) -> Path:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.trial, r.episode, r.state, r.agent, repr(r.v_defender), repr(r.wall_time_s)])
    return path


def read_csv(path: str | PathLike) -> list[RunRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
    return [RunRecord(int(t), int(e), s, a, float(v), float(w)) for t, e, s, a, v, w in rows[1:]]


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_") or "state"


def emit_plots(records: list[RunRecord], out_dir: str | PathLike, title: str = "") -> list[Path]:
    """One SVG per state: mean V^D across trials per agent with a +-1 std band."""
    if not records:
        raise ValueError("no records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    states = list(dict.fromkeys(r.state for r in records))
    agents = list(dict.fromkeys(r.agent for r in records))
    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "bsmg", "svg.fonttype": "path"}):
        for k, s in enumerate(states):
            fig, ax = plt.subplots(figsize=(6, 4))
            for a in agents:
                rows = [r for r in records if r.state == s and r.agent == a]
                eps = sorted({r.episode for r in rows})
                table: dict[int, list[float]] = {e: [] for e in eps}
                for r in rows:
                    table[r.episode].append(r.v_defender)
                mean = np.array([np.mean(table[e]) for e in eps])
                std = np.array([np.std(table[e]) for e in eps])
                ax.plot(eps, mean, label=a, linewidth=1)
                ax.fill_between(eps, mean - std, mean + std, alpha=0.2)
            ax.set_xlabel("episode")
            ax.set_ylabel("defender value")
            ax.set_title(f"{title} {s}".strip())
            ax.legend()
            fig.tight_layout()
            p = out_dir / f"state{k}_{_slug(s)}.svg"
            fig.savefig(p, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(p)
    return paths


def write_outputs(records: list[RunRecord], summary: dict, out_dir: str | PathLike, cfg: ExperimentConfig | None = None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(records, out_dir / "records.csv")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if cfg is not None:
        (out_dir / "config.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    return emit_plots(records, out_dir, title=Path(cfg.instance).stem if cfg else "")


def instance_kind(data: dict) -> str:
    return (data.get(EXTENSION_KEY) or {}).get("domain", "generic")

