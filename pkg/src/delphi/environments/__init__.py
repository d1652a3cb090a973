from .hypercube import (
    GAME_OVER,
    HypercubeMDP,
    HypercubeState,
    admissible,
    hamming,
    history_reward,
    hypercube_from_config,
    random_goal,
    score,
)
from .tabular import TabularMDP, one_hot_features, random_tabular
from .tree import build_tree_counterexample, tree_expert, tree_q
from .wrappers import InaccurateEnv, PerturbedFeatures, wrap_inaccurate

__all__ = [
    "GAME_OVER",
    "HypercubeMDP",
    "HypercubeState",
    "InaccurateEnv",
    "PerturbedFeatures",
    "TabularMDP",
    "admissible",
    "build_tree_counterexample",
    "hamming",
    "history_reward",
    "hypercube_from_config",
    "one_hot_features",
    "random_goal",
    "random_tabular",
    "score",
    "tree_expert",
    "tree_q",
    "wrap_inaccurate",
]
