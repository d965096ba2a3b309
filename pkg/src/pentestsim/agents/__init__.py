"""Attack agents: tabular Q-learning (epsilon-greedy and UCB), deep Q-learning
and a uniform-random baseline."""

from .baseline import RandomResult, train_random
from .common import (
    EpisodeRecord,
    EvalResult,
    Policy,
    RunRecord,
    UniformPolicy,
    epsilon_decay,
    greedy_policy_eval,
    smoothed_returns,
    standard_error,
)
from .deep import DQLHyperparams, DQLPolicy, DQLResult, QNetwork, ReplayBuffer, train_dql
from .tabular import QTable, TabularHyperparams, TabularResult, train_tabular

AGENT_KINDS = ("tabular-eps", "tabular-ucb", "dql", "random")

__all__ = [
    "AGENT_KINDS",
    "DQLHyperparams",
    "DQLPolicy",
    "DQLResult",
    "EpisodeRecord",
    "EvalResult",
    "Policy",
    "QNetwork",
    "QTable",
    "RandomResult",
    "ReplayBuffer",
    "RunRecord",
    "TabularHyperparams",
    "TabularResult",
    "UniformPolicy",
    "epsilon_decay",
    "greedy_policy_eval",
    "smoothed_returns",
    "standard_error",
    "train_dql",
    "train_random",
    "train_tabular",
]
