"""Binary-tree fixture where action values are linear but the expert is not greedy in them.

Actions: 0 = left (reward -1), 1 = right (reward +1). The expert alternates:
after a left move it plays right and vice versa; at the root it plays left.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from ..mdp import ActionFeatureMap, State
from .tabular import TabularMDP

LEFT, RIGHT = 0, 1


def _index(path: tuple) -> int:
    # heap order: layer offset 2^len - 1, then the path read as a binary number
    return (1 << len(path)) - 1 + int("".join(map(str, path)) or "0", 2)


def tree_expert(path: tuple) -> int:
    return RIGHT if path and path[-1] == LEFT else LEFT


def tree_q(H: int, path: tuple, a: int) -> float:
    """Expert action value: the move's reward when an odd number of steps remain, else 0."""
    remaining = H - len(path)
    return (1.0 if a == RIGHT else -1.0) if remaining % 2 == 1 else 0.0


def build_tree_counterexample(H: int):
    """Return ``(mdp, q_features, expert_table, paths)`` for a depth-``H`` binary tree.

    ``q_features(s, a)`` is the one-dimensional expert action value, so the
    parameter ``[1.0]`` reproduces it exactly. ``expert_table[state.key]`` is
    the expert action and ``paths[state.key]`` the action history of a state.
    """
    if H < 2:
        raise InvalidArgument("H must be at least 2")
    layers = [1 << h for h in range(H)]
    S = sum(layers)
    paths = [None] * S
    for h in range(H):
        for code in range(1 << h):
            path = tuple((code >> (h - 1 - j)) & 1 for j in range(h))
            paths[_index(path)] = path
    P = []
    for h in range(H - 1):
        p = np.zeros((layers[h], 2, layers[h + 1]))
        for i in range(layers[h]):
            p[i, LEFT, 2 * i] = 1.0
            p[i, RIGHT, 2 * i + 1] = 1.0
        P.append(p)
    r = np.tile([-1.0, 1.0], (S, 1))
    expert = np.array([tree_expert(path) for path in paths])
    v = np.array([tree_q(H, path, tree_expert(path)) for path in paths])
    mdp = TabularMDP(layers, 2, P, r, np.zeros((S, 2), bool), v[:, None], [1.0],
                     reward_range=(-1.0, 1.0))

    def qfeat(s: State, a: int):
        return np.array([tree_q(H, paths[s.key], a)])

    return mdp, ActionFeatureMap(1, qfeat), expert, paths
