"""Network attack simulator: a penetration test modelled as a Markov decision
process, with tabular and deep Q-learning attackers and an experiment harness."""

from .env import (
    Action,
    ActionKind,
    InvalidActionError,
    NetworkAttackEnv,
    ServiceKnowledge,
    State,
    StepResult,
    action_space,
    canonical_key,
    exploit_feasible,
    is_done,
    reset,
    state_space_size_bound,
    step,
)
from .network import Address, Machine, Network, NetworkError, Service, subnets_connected, traffic_permitted, validate
from .scenario import (
    ExploitMode,
    GeneratorError,
    GeneratorParams,
    ScenarioError,
    SolvabilityResult,
    dump_scenario,
    generate_network,
    load_scenario,
    solvability_oracle,
    theoretical_max_reward,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "Address",
    "ExploitMode",
    "GeneratorError",
    "GeneratorParams",
    "InvalidActionError",
    "Machine",
    "Network",
    "NetworkAttackEnv",
    "NetworkError",
    "ScenarioError",
    "Service",
    "ServiceKnowledge",
    "SolvabilityResult",
    "State",
    "StepResult",
    "action_space",
    "canonical_key",
    "dump_scenario",
    "exploit_feasible",
    "generate_network",
    "is_done",
    "load_scenario",
    "reset",
    "solvability_oracle",
    "state_space_size_bound",
    "step",
    "subnets_connected",
    "theoretical_max_reward",
    "traffic_permitted",
    "validate",
]
