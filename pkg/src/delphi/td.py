"""Temporal-difference vectors: sampled with resets, or exact from model tables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeterminismViolation, InvalidArgument, TerminalStep
from .mdp import ActionFeatureMap, Environment, FeatureMap, Simulator, State


@dataclass(frozen=True)
class TDVector:
    """``reward (+) (E phi(s') - phi(s))`` as a length ``d + 1`` array."""

    values: np.ndarray
    n: int
    tag: str = "measured"

    @property
    def reward(self) -> float:
        return float(self.values[0])

    @property
    def feature_diff(self) -> np.ndarray:
        return self.values[1:]

    def residual(self, theta) -> float:
        """``<values, 1 (+) theta>``."""
        return float(self.values[0] + np.dot(self.values[1:], theta))


def measure_td(sim: Simulator, a: int, n: int, feature_map: FeatureMap | None = None,
               tag: str = "measured") -> TDVector:
    """Average of ``n`` step-then-reset samples of ``R (+) (phi(S') - phi(s))``.

    The simulator is left at ``s`` and its sample counter grows by ``n``.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    s = sim.current
    if s.terminal:
        raise TerminalStep("cannot measure at the terminal layer")
    fm = feature_map or sim.env.feature_map
    rewards, succ = sim.step_repeated(a, n)
    sim.reset_to_checkpoint()
    phi_next = sum(c * fm(sp) for sp, c in succ) / n
    return TDVector(np.concatenate([[rewards.mean()], phi_next - fm(s)]), int(n), tag)


def true_td(env: Environment, s: State, a: int, feature_map: FeatureMap | None = None) -> TDVector:
    """Exact ``r(s, a) (+) (E phi(s') - phi(s))``; needs model tables."""
    if s.terminal:
        raise TerminalStep("no TD vector at the terminal layer")
    fm = feature_map or env.feature_map
    phi_next = sum(p * fm(sp) for sp, p in env.transitions(s, a))
    return TDVector(np.concatenate([[env.mean_reward(s, a)], phi_next - fm(s)]), 0, "exact")


def measure_transition(sim: Simulator, a: int, n: int):
    """Mean reward of ``n`` resets from the current state and the unique successor.

    Raises :class:`DeterminismViolation` if two successors are observed.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if sim.current.terminal:
        raise TerminalStep("cannot measure at the terminal layer")
    rewards, succ = sim.step_repeated(a, n)
    sim.reset_to_checkpoint()
    if len(succ) != 1:
        raise DeterminismViolation(
            f"{len(succ)} distinct successors observed for action {a} at {sim.current}")
    return float(rewards.mean()), succ[0][0]


def q_td_vectors(reward: float, s: State, a: int, s_next: State,
                 qfeat: ActionFeatureMap, num_actions: int, n: int = 1, tag="measured"):
    """``r(s, a) (+) (phi(s', a') - phi(s, a))`` for every successor action ``a'``.

    At a terminal successor a single vector with zero successor features is returned.
    """
    base = qfeat(s, a)
    nxt = [0] if s_next.terminal else range(num_actions)
    return [TDVector(np.concatenate([[reward], qfeat(s_next, b) - base]), n, tag) for b in nxt]
