"""Batch-RL minimax solvers and bound verification on tabular soft MDPs.

The package solves entropy-regularized tabular MDPs exactly, enumerates
finite value/policy/helper classes, fits the smoothed minimax objective and
its hard-max baseline on sampled transition data, and numerically verifies
the identities, moment facts, and finite-sample performance bounds that
justify the estimator.
"""

from . import errors
from .classes import (
    ClassSpec,
    FunctionClasses,
    build_perturbation_classes,
    classes_from_json,
    classes_to_json,
    concentrability,
    helper_realizability_error,
    load_classes,
    mu_digest,
    occupancy_distribution,
    realizability_error,
    save_classes,
    uniform_distribution,
    validate_classes,
    validate_distribution,
    weighted_norm,
)
from .data import (
    Dataset,
    Transition,
    empirical_consistency_loss,
    empirical_regression_loss,
    load_dataset,
    sample_dataset,
    save_dataset,
)
from .experiments import (
    ExperimentConfig,
    build_q_perturbation_classes,
    emit_report,
    load_config,
    run_lambda_sweep,
    run_rate_experiment,
)
from .mdp import (
    FiniteMdp,
    OccupancyMeasure,
    SoftParams,
    consistency_operator,
    hard_value_iteration,
    load_mdp,
    make_rng,
    mdp_from_json,
    mdp_to_json,
    occupancy_measure,
    performance,
    random_mdp,
    random_policy,
    save_mdp,
    soft_backup,
    soft_policy_value,
    soft_value_iteration,
    v_lambda_max,
    validate_mdp,
)
from .solvers import (
    SolveResult,
    empirical_optimality_loss,
    fit_helper,
    greedy_policy,
    msbo_solve,
    sbeed_solve,
)
from .suite import CheckResult, run_all
from .verify import (
    BoundReport,
    ExcessRiskStats,
    SuboptimalityReport,
    conditional_variance_identity,
    excess_risk_stats,
    quadratic_inequality_root,
    sample_complexity,
    suboptimality_check,
    telescoping_residual,
    theorem_bound,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "ClassSpec",
    "FunctionClasses",
    "build_perturbation_classes",
    "classes_from_json",
    "classes_to_json",
    "concentrability",
    "helper_realizability_error",
    "load_classes",
    "mu_digest",
    "occupancy_distribution",
    "realizability_error",
    "save_classes",
    "uniform_distribution",
    "validate_classes",
    "validate_distribution",
    "weighted_norm",
    "Dataset",
    "Transition",
    "empirical_consistency_loss",
    "empirical_regression_loss",
    "load_dataset",
    "sample_dataset",
    "save_dataset",
    "ExperimentConfig",
    "build_q_perturbation_classes",
    "emit_report",
    "load_config",
    "run_lambda_sweep",
    "run_rate_experiment",
    "FiniteMdp",
    "OccupancyMeasure",
    "SoftParams",
    "consistency_operator",
    "hard_value_iteration",
    "load_mdp",
    "make_rng",
    "mdp_from_json",
    "mdp_to_json",
    "occupancy_measure",
    "performance",
    "random_mdp",
    "random_policy",
    "save_mdp",
    "soft_backup",
    "soft_policy_value",
    "soft_value_iteration",
    "v_lambda_max",
    "validate_mdp",
    "SolveResult",
    "empirical_optimality_loss",
    "fit_helper",
    "greedy_policy",
    "msbo_solve",
    "sbeed_solve",
    "CheckResult",
    "run_all",
    "BoundReport",
    "ExcessRiskStats",
    "SuboptimalityReport",
    "conditional_variance_identity",
    "excess_risk_stats",
    "quadratic_inequality_root",
    "sample_complexity",
    "suboptimality_check",
    "telescoping_residual",
    "theorem_bound",
    "__version__",
]
