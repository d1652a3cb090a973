"""Queryable expert policy with call accounting."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import BudgetExceeded, InvalidArgument, NoAction, Unsupported
from .mdp import Environment, State


class ExpertOracle:
    """Deterministic policy behind a counted query interface.

    Only the action is revealed. ``budget=None`` disables the call limit.
    """

    def __init__(self, rule: Callable[[State], int], num_actions: int, budget=None,
                 state_id: Callable[[State], str] = str):
        self.rule = rule
        self.num_actions = int(num_actions)
        self.budget = budget
        self.call_count = 0
        self.log: list = []
        self.iteration = 0
        self._state_id = state_id

    def query(self, s: State) -> int:
        if s.terminal:
            raise NoAction("the expert has no action at the terminal layer")
        if self.budget is not None and self.call_count >= self.budget:
            raise BudgetExceeded(f"oracle budget of {self.budget} calls exhausted")
        a = int(self.rule(s))
        if not 0 <= a < self.num_actions:
            raise NoAction(f"expert rule returned invalid action {a}")
        self.call_count += 1
        self.log.append({"t": self.iteration, "state": self._state_id(s), "action": a,
                         "cumulative_count": self.call_count})
        return a

    def write_log(self, path) -> None:
        with Path(path).open("w") as fh:
            for row in self.log:
                fh.write(json.dumps(row) + "\n")


def make_tabular_expert(mdp: Environment, mode: str = "optimal", table=None, budget=None):
    """Expert over a tabular model.

    ``mode="optimal"`` uses backward induction (lowest index on ties);
    ``mode="provided"`` wraps ``table`` (indexed by ``State.key``).
    """
    if mode == "optimal":
        from .exact import exact_optimal

        if not hasattr(mdp, "states"):
            raise Unsupported("optimal expert needs an enumerable model")
        pi, _ = exact_optimal(mdp)
        rule = lambda s: pi[s]  # noqa: E731
    elif mode == "provided":
        if table is None:
            raise InvalidArgument("provided mode needs a policy table")
        arr = np.asarray(table, dtype=int)
        rule = lambda s: int(arr[s.key])  # noqa: E731
    else:
        raise InvalidArgument(f"unknown expert mode {mode!r}")
    return ExpertOracle(rule, mdp.num_actions, budget=budget, state_id=mdp.state_id)


def make_hypercube_expert(env, budget=None) -> ExpertOracle:
    return ExpertOracle(env.expert_action, env.num_actions, budget=budget, state_id=env.state_id)
