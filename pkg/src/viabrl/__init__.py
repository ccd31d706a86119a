"""Viability kernels and entropy-regularized soft value iteration for finite deterministic MDPs."""

from .environments import (
    EnvFormatError,
    GridSpec,
    PendulumSpec,
    build_counterexample,
    build_fenced_cliff,
    build_pendulum,
    build_unconstrained_cliff,
    load_environment,
    save_environment,
    save_grid,
)
from .mdp import (
    ConvergenceError,
    Mdp,
    SolveConfig,
    StochasticPolicy,
    min_risk,
    policy_entropy,
    policy_evaluate_entropy,
    policy_evaluate_return,
    policy_evaluate_risk,
    same_structure,
    validate_mdp,
)
from .metrics import (
    PenaltyConstants,
    RobustnessOrder,
    best_safe_entropy_through,
    delta_safety,
    is_mode_safe,
    lemma2_constants,
    minimum_safe_penalty,
    offpolicy_entropy_measure,
    s_robustness_compare,
    sufficient_penalty,
    theorem1_gap,
)
from .robustness import (
    NoiseModel,
    RobustnessReport,
    RolloutConfig,
    min_distance_to_constraint,
    rollout,
    success_rate,
)
from .solver import (
    ModePolicy,
    QFunction,
    mode_policy,
    soft_value_iteration,
    softmax_policy,
    solve_constrained,
    solve_max_entropy,
    solve_penalized,
)
from .viability import ViabilityDecomposition, default_indicator, is_dynamic_indicator, viability_kernel

__version__ = "0.1.0"
