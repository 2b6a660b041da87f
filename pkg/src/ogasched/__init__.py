"""Online scheduling of multi-server jobs by projected gradient ascent.

Submodules: :mod:`~ogasched.model` (graph and feasible set),
:mod:`~ogasched.reward` (utilities, reward and gradient),
:mod:`~ogasched.projection` (Euclidean projection), :mod:`~ogasched.policies`
(OGA and baselines), :mod:`~ogasched.regret` (offline optimum and bound),
:mod:`~ogasched.simulator` and :mod:`~ogasched.io`.
"""
from .model import BipartiteGraph, GraphValidationError, ResourceCatalog, is_feasible, validate_graph
from .policies import LearningRateSchedule, OGAPolicy, make_policy
from .projection import Subproblem, project, project_oracle, project_subproblem
from .regret import RegretBoundInputs, empirical_regret, offline_optimum, regret_upper_bound
from .reward import RewardModel, UtilityKind, UtilitySpec, reward_gradient, total_reward
from .simulator import SimConfig, arrival_trajectory, compare_policies, run_simulation, synthesize_scenario

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "GraphValidationError", "ResourceCatalog", "is_feasible", "validate_graph",
    "LearningRateSchedule", "OGAPolicy", "make_policy",
    "Subproblem", "project", "project_oracle", "project_subproblem",
    "RegretBoundInputs", "empirical_regret", "offline_optimum", "regret_upper_bound",
    "RewardModel", "UtilityKind", "UtilitySpec", "reward_gradient", "total_reward",
    "SimConfig", "arrival_trajectory", "compare_policies", "run_simulation", "synthesize_scenario",
]
