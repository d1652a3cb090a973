"""Expert-guided reinforcement learning with linear value functions."""
from .algorithm import (
    HyperParams,
    InducedPolicy,
    QPolicy,
    RunStats,
    compute_hyperparameters,
    consistency_test,
    estimate_start_features,
    evaluate_policy_rollouts,
    exact_measurement_params,
    freeze_policy,
    inaccuracy_regime,
    induced_policy_action,
    run_delphi,
    run_delphi_q,
    tolerated_inaccuracy,
    trace_q_policy,
)
from .exact import (
    ValueTable,
    check_delphi_eluder,
    eluder_bound,
    exact_optimal,
    exact_value,
    verify_eluder_sequence,
)
from .expert import ExpertOracle, make_hypercube_expert, make_tabular_expert
from .mdp import ActionFeatureMap, FeatureMap, Simulator, State
from .td import TDVector, measure_td, measure_transition, true_td
from .version_space import VersionSpace, optimistic_argmax, project

__version__ = "0.1.0"

__all__ = [
    "ActionFeatureMap",
    "ExpertOracle",
    "FeatureMap",
    "HyperParams",
    "InducedPolicy",
    "QPolicy",
    "RunStats",
    "Simulator",
    "State",
    "TDVector",
    "ValueTable",
    "VersionSpace",
    "check_delphi_eluder",
    "compute_hyperparameters",
    "consistency_test",
    "eluder_bound",
    "estimate_start_features",
    "evaluate_policy_rollouts",
    "exact_measurement_params",
    "exact_optimal",
    "exact_value",
    "freeze_policy",
    "inaccuracy_regime",
    "induced_policy_action",
    "make_hypercube_expert",
    "make_tabular_expert",
    "measure_td",
    "measure_transition",
    "optimistic_argmax",
    "project",
    "run_delphi",
    "run_delphi_q",
    "tolerated_inaccuracy",
    "trace_q_policy",
    "true_td",
    "verify_eluder_sequence",
]
