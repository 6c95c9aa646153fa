"""Tools for finite discounted stochastic games: exact best-reply analysis,
reply-graph certification, inertial adjustment processes, and decentralized
tabular Q-learning simulators."""

from .game import (
    DeterministicPolicy,
    EnumerationCapError,
    JointPolicy,
    RandomizedPolicy,
    StochasticGame,
    ValidationReport,
    enumerate_joint_policies,
    enumerate_own_policies,
    game_from_dict,
    game_to_dict,
    joint_policy_count,
    joint_policy_from_index,
    joint_policy_index,
    load_game,
    perturb,
    reachability_check,
    sample_transition,
    save_game,
    validate_game,
)
from .solver import (
    QTable,
    SeparationConstants,
    ValueVector,
    bellman_optimal_operator,
    best_reply_set,
    experimentation_bound,
    is_strict_best_reply,
    optimal_q_factors,
    policy_q_factors,
    policy_value,
    separation_constants,
    strict_better_reply_set,
)

__version__ = "0.1.0"
