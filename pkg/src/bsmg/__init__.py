"""Leader-follower Markov games with several attacker types.

Exact stage and multi-stage solvers, Q-learning defenders, and two
configuration-switching defense simulators."""

from .envs import MTDEnv, ProtocolError, env_from_instance, make_ids_env, make_webapp_env, spec_of
from .game import (
    GameSpec,
    QTables,
    StageGame,
    StrategyProfile,
    ValueFunctions,
    generate_random_bsmg,
    load_spec,
    save_spec,
    validate,
)
from .learners import LearnerConfig, LearningCurve, bssq_learn, evaluate_policy, learn
from .oracle import value_iteration
from .stage import harsanyi_transform, solve_bsse, solve_maximin, solve_nash

__version__ = "0.1.0"
