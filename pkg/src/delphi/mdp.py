"""Episodic finite-horizon simulators with a one-deep reset checkpoint.

States are layered by horizon index ``h`` in ``1..H``; every environment has a
single absorbing terminal state at ``h = H + 1`` whose features are zero.
Actions are 0-based indices in ``range(A)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable

import numpy as np

from .errors import (
    DimensionError,
    InvalidAction,
    InvalidArgument,
    NoCheckpoint,
    TerminalStep,
    Unsupported,
)


@dataclass(frozen=True)
class State:
    """Opaque state identifier tagged with its horizon index."""

    key: Hashable
    h: int
    terminal: bool = False

    def __str__(self):
        return "terminal" if self.terminal else f"{self.key}@{self.h}"


@dataclass(frozen=True)
class Transition:
    state: State
    action: int
    reward: float
    next_state: State


def terminal_state(horizon: int) -> State:
    return State("terminal", horizon + 1, True)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator from an int or a ``SeedSequence``."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


class FeatureMap:
    """State features ``s -> R^dim``; terminal states map to the zero vector."""

    def __init__(self, dim: int, fn: Callable[[State], np.ndarray]):
        if dim < 1:
            raise InvalidArgument("feature dimension must be positive")
        self.dim = int(dim)
        self._fn = fn

    def __call__(self, s: State) -> np.ndarray:
        if s.terminal:
            return np.zeros(self.dim)
        v = np.asarray(self._fn(s), dtype=float)
        if v.shape != (self.dim,):
            raise DimensionError(f"feature of shape {v.shape}, expected ({self.dim},)")
        return v


class ActionFeatureMap:
    """State-action features ``(s, a) -> R^dim``; zero at terminal states."""

    def __init__(self, dim: int, fn: Callable[[State, int], np.ndarray]):
        if dim < 1:
            raise InvalidArgument("feature dimension must be positive")
        self.dim = int(dim)
        self._fn = fn

    def __call__(self, s: State, a: int) -> np.ndarray:
        if s.terminal:
            return np.zeros(self.dim)
        v = np.asarray(self._fn(s, a), dtype=float)
        if v.shape != (self.dim,):
            raise DimensionError(f"feature of shape {v.shape}, expected ({self.dim},)")
        return v


class Environment:
    """Base class for environment models.

    Subclasses implement :meth:`sample` and :meth:`sample_start`. Models that
    expose exact dynamics also implement :meth:`transitions`,
    :meth:`mean_reward` and :meth:`start_distribution`; the defaults raise
    :class:`Unsupported`.
    """

    horizon: int
    num_actions: int
    feature_map: FeatureMap
    reward_range: tuple = (0.0, 1.0)

    @property
    def terminal(self) -> State:
        return terminal_state(self.horizon)

    def sample(self, s: State, a: int, rng: np.random.Generator):
        raise NotImplementedError

    def sample_start(self, rng: np.random.Generator) -> State:
        dist = self.start_distribution()
        if len(dist) == 1:
            return dist[0][0]
        probs = np.array([p for _, p in dist])
        return dist[rng.choice(len(dist), p=probs / probs.sum())][0]

    def sample_batch(self, s: State, a: int, n: int, rng: np.random.Generator):
        """``n`` independent draws from ``(s, a)``.

        Returns the reward array and a list of ``(successor, count)`` pairs in
        first-seen order.
        """
        rewards = np.empty(n)
        counts: dict = {}
        for i in range(n):
            rewards[i], sp = self.sample(s, a, rng)
            counts[sp] = counts.get(sp, 0) + 1
        return rewards, list(counts.items())

    def transitions(self, s: State, a: int) -> list:
        raise Unsupported(f"{type(self).__name__} exposes no transition table")

    def mean_reward(self, s: State, a: int) -> float:
        raise Unsupported(f"{type(self).__name__} exposes no reward table")

    def reward_distribution(self, s: State, a: int) -> list:
        """Support of the reward of ``(s, a)`` as ``(value, probability)`` pairs."""
        raise Unsupported(f"{type(self).__name__} exposes no reward distribution")

    def start_distribution(self) -> list:
        raise Unsupported(f"{type(self).__name__} exposes no start distribution")

    def state_id(self, s: State) -> str:
        return str(s)


class Simulator:
    """Stateful sampler over an :class:`Environment` with a depth-one checkpoint.

    ``samples`` counts :meth:`step` calls; restarts and resets are free.
    """

    def __init__(self, env: Environment, seed=0):
        self.env = env
        self._seedseq = (
            seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        )
        self.rng = make_rng(self._seedseq)
        self.samples = 0
        self.restarts = 0
        self.checkpoint: State | None = None
        self.current: State = env.sample_start(self.rng)

    @property
    def horizon(self) -> int:
        return self.env.horizon

    @property
    def num_actions(self) -> int:
        return self.env.num_actions

    def _check(self, a):
        if self.current.terminal:
            raise TerminalStep("cannot step from the terminal layer")
        if not (isinstance(a, (int, np.integer)) and 0 <= a < self.env.num_actions):
            raise InvalidAction(f"action {a!r} not in range({self.env.num_actions})")

    def step(self, a: int):
        self._check(a)
        r, sp = self.env.sample(self.current, int(a), self.rng)
        self.samples += 1
        self.checkpoint = self.current
        self.current = sp
        return float(r), sp

    def reset_to_checkpoint(self) -> State:
        if self.checkpoint is None:
            raise NoCheckpoint("no step since the last restart")
        self.current = self.checkpoint
        return self.current

    def restart(self) -> State:
        self.current = self.env.sample_start(self.rng)
        self.checkpoint = None
        self.restarts += 1
        return self.current

    def step_repeated(self, a: int, n: int):
        """Equivalent to ``n`` rounds of ``step(a)`` then ``reset_to_checkpoint()``."""
        if n < 1:
            raise InvalidArgument("n must be >= 1")
        self._check(a)
        rewards, nxt = self.env.sample_batch(self.current, int(a), int(n), self.rng)
        self.samples += int(n)
        self.checkpoint = self.current
        return rewards, nxt

    def clone(self) -> "Simulator":
        """Independent simulator at the same state with a forked random stream."""
        child = self._seedseq.spawn(1)[0]
        sim = Simulator.__new__(Simulator)
        sim.env = self.env
        sim._seedseq = child
        sim.rng = make_rng(child)
        sim.samples = 0
        sim.restarts = 0
        sim.checkpoint = self.checkpoint
        sim.current = self.current
        return sim

    def teleport(self, s: State) -> None:
        """Place the simulator at ``s``. Evaluation helpers only; the learner never calls this."""
        self.current = s
        self.checkpoint = None


def reachable_states(env: Environment, starts: Iterable[State] | None = None) -> list:
    """All non-terminal states reachable from the start support, via exact transitions."""
    if starts is None:
        starts = [s for s, p in env.start_distribution() if p > 0]
    seen = set()
    stack = list(starts)
    order = []
    while stack:
        s = stack.pop()
        if s in seen or s.terminal:
            continue
        seen.add(s)
        order.append(s)
        for a in range(env.num_actions):
            for sp, p in env.transitions(s, a):
                if p > 0 and sp not in seen:
                    stack.append(sp)
    order.sort(key=lambda s: s.h)
    return order
