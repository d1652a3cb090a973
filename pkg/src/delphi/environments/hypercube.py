"""Bit-flipping hypercube MDP with a hidden goal vector.

Each of ``K`` phases lasts ``p`` steps; an action flips one bit. At the end
of a phase the trajectory is scored against the goal by a product of
``g(x) = 1 - x / p`` factors. Landing within Hamming distance ``< p / 4`` of
the goal ends the game with a deterministic reward; reaching the end of the
last phase pays a Bernoulli reward with the same mean. Repeating a bit inside
one phase ends the game during the first ``p / 4`` steps and freezes the
state afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, InvalidAction, InvalidConfig, NoAction
from ..mdp import ActionFeatureMap, Environment, FeatureMap, State, make_rng

VALUE_SCALE = 9.0 / 8.0


def hamming(x, y) -> int:
    """Number of coordinates where two ``+-1`` vectors differ."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape} vs {y.shape}")
    return int(np.count_nonzero(x != y))


def score(dist, p) -> float:
    return 1.0 - dist / p


@dataclass(frozen=True)
class HypercubeState:
    """Live (non game-over) hypercube state.

    ``k`` is the phase index (0-based), ``i`` the step within the phase,
    ``history`` the phase-end vectors ``(s_0, ..., s_k)`` with ``s_0`` all ones.
    """

    k: int
    i: int
    s: tuple
    history: tuple
    fix: tuple
    frozen: bool = False

    @property
    def ct_flip(self) -> int:
        return hamming(self.history[-1], self.s)


GAME_OVER = "game-over"


def history_reward(history, goal) -> float:
    """Product of per-phase scores times the score of the last vector against ``goal``."""
    if goal is None or len(goal) == 0:
        raise InvalidConfig("empty goal vector")
    p = len(goal)
    out = 1.0
    for prev, cur in zip(history[:-1], history[1:]):
        out *= score(hamming(prev, cur), p)
    return out * score(hamming(history[-1], goal), p)


def admissible(goal) -> bool:
    p = len(goal)
    dist = hamming(np.ones(p), goal)
    return p / 4 <= dist <= 3 * p / 4


def random_goal(p: int, rng) -> np.ndarray:
    while True:
        w = rng.choice([-1, 1], size=p)
        if admissible(w):
            return w.astype(int)


class HypercubeMDP(Environment):
    """Hypercube instance with ``H = K * p``.

    Parameters
    ----------
    p, K : int
        Dimension and number of phases.
    goal : array of +-1
        Hidden vector; must satisfy ``p/4 <= hamming(1, goal) <= 3p/4``.
    final_reward : {"bernoulli", "mean"}
        Emission at the end of the last phase.
    """

    def __init__(self, p: int, K: int, goal, final_reward: str = "bernoulli"):
        if p < 1 or K < 1:
            raise InvalidConfig("p and K must be positive")
        goal = np.asarray(goal, dtype=int)
        if goal.shape != (p,) or not np.all(np.abs(goal) == 1):
            raise InvalidConfig(f"goal must be a +-1 vector of length {p}")
        if not admissible(goal):
            raise InvalidConfig("goal must satisfy p/4 <= hamming(1, goal) <= 3p/4")
        if final_reward not in ("bernoulli", "mean"):
            raise InvalidConfig(f"unknown final_reward {final_reward!r}")
        self.p, self.K = int(p), int(K)
        self.goal = goal
        self.final_reward = final_reward
        self.horizon = self.p * self.K
        self.num_actions = self.p
        self.feature_map = FeatureMap(1 + p + p * p, self.value_features)
        self.policy_feature_map = ActionFeatureMap(1 + p, self.policy_features)
        self.value_scale = VALUE_SCALE
        self.policy_scale = float(np.sqrt(p * p + p))
        self.s0 = State(HypercubeState(0, 0, (1,) * p, ((1,) * p,), (0,) * p), 1)

    # -- dynamics --------------------------------------------------------
    def _over(self, h: int) -> State:
        return self.terminal if h > self.horizon else State(GAME_OVER, h)

    def step_exact(self, s: State, a: int):
        """Deterministic successor and reward mean of ``(s, a)``."""
        if not 0 <= a < self.p:
            raise InvalidAction(f"action {a} not in range({self.p})")
        if s.key == GAME_OVER:
            return 0.0, self._over(s.h + 1)
        st: HypercubeState = s.key
        p = self.p
        cur, fix, frozen = list(st.s), list(st.fix), st.frozen
        if not frozen:
            if fix[a]:
                if st.i < p / 4:
                    return 0.0, self._over(s.h + 1)
                frozen = True
                fix = [1] * p
            else:
                cur[a] = -cur[a]
                fix[a] = 1
        i = st.i + 1
        cur_t = tuple(cur)
        if i < p:
            return 0.0, State(HypercubeState(st.k, i, cur_t, st.history, tuple(fix), frozen), s.h + 1)
        history = st.history + (cur_t,)
        k = st.k + 1
        mean = history_reward(history, self.goal)
        if k == self.K:
            return mean, self.terminal
        if hamming(cur_t, self.goal) < p / 4:
            return mean, self._over(s.h + 1)
        return 0.0, State(HypercubeState(k, 0, cur_t, history, (0,) * p), s.h + 1)

    def is_final(self, s: State, a: int) -> bool:
        return s.key != GAME_OVER and s.h == self.horizon

    def reward_distribution(self, s, a):
        mean = self.step_exact(s, a)[0]
        if self.final_reward == "bernoulli" and self.is_final(s, a):
            return [(1.0, mean), (0.0, 1.0 - mean)]
        return [(mean, 1.0)]

    def start_distribution(self):
        return [(self.s0, 1.0)]

    def sample_start(self, rng):
        return self.s0

    def transitions(self, s, a):
        return [(self.step_exact(s, a)[1], 1.0)]

    def mean_reward(self, s, a):
        return self.step_exact(s, a)[0]

    def sample(self, s, a, rng):
        mean, sp = self.step_exact(s, a)
        if self.final_reward == "bernoulli" and self.is_final(s, a):
            return float(rng.random() < mean), sp
        return mean, sp

    def state_id(self, s: State) -> str:
        if s.terminal:
            return "terminal"
        if s.key == GAME_OVER:
            return f"over@{s.h}"
        st = s.key
        bits = "".join("+" if b > 0 else "-" for b in st.s)
        fx = "".join(str(b) for b in st.fix)
        hist = "|".join("".join("+" if b > 0 else "-" for b in v) for v in st.history)
        return f"k{st.k}i{st.i}:{bits}:{fx}:{hist}:{'F' if st.frozen else ''}"

    # -- expert ----------------------------------------------------------
    def expert_action(self, s: State) -> int:
        """Flip the lowest unfixed bit that disagrees with the goal, else repeat the lowest fixed bit."""
        if s.terminal or s.key == GAME_OVER:
            raise NoAction("no expert action at a game-over or terminal state")
        st = s.key
        for j in range(self.p):
            if not st.fix[j] and st.s[j] != self.goal[j]:
                return j
        for j in range(self.p):
            if st.fix[j]:
                return j
        raise NoAction("no disagreeing bit and no played bit")

    def expert_policy(self, s: State) -> int:
        """Total version of :meth:`expert_action` for evaluation; game-over states play 0."""
        return 0 if s.key == GAME_OVER else self.expert_action(s)

    # -- value features --------------------------------------------------
    def phase_factor(self, st: HypercubeState) -> float:
        out = 1.0
        for prev, cur in zip(st.history[:-1], st.history[1:]):
            out *= score(hamming(prev, cur), self.p)
        return out

    def raw_value_features(self, s: State) -> np.ndarray:
        p = self.p
        if s.terminal or s.key == GAME_OVER:
            return np.zeros(1 + p + p * p)
        st = s.key
        sv = np.array(st.s, dtype=float)
        fix = np.array(st.fix, dtype=float)
        nfix = 1.0 - fix
        a = 0.5 * fix.sum()
        b = -0.5 * fix * sv
        c = st.ct_flip + 0.5 * nfix.sum()
        d = -0.5 * nfix * sv
        a1, c1 = 1 - a / p, 1 - c / p
        bb, dd = -b / np.sqrt(p), -d / np.sqrt(p)
        body = np.concatenate([[a1 * c1], c1 * bb + a1 * dd, np.outer(bb, dd).ravel()])
        return self.phase_factor(st) * body

    def value_features(self, s: State) -> np.ndarray:
        return self.raw_value_features(s) / self.value_scale

    def value_param(self) -> np.ndarray:
        g = self.goal / np.sqrt(self.p)
        return self.value_scale * np.concatenate([[1.0], g, np.outer(g, g).ravel()])

    def expert_value_formula(self, s: State) -> float:
        """Closed-form expert value: phase factors times the two remaining scores."""
        if s.terminal or s.key == GAME_OVER:
            return 0.0
        st = s.key
        sv, fix = np.array(st.s), np.array(st.fix, dtype=bool)
        wrong = sv != self.goal
        e_fix = int(np.count_nonzero(wrong & fix))
        e_free = int(np.count_nonzero(wrong & ~fix))
        p = self.p
        return self.phase_factor(st) * score(st.ct_flip + e_free, p) * score(e_fix, p)

    # -- policy features -------------------------------------------------
    def next_vector(self, s: State, a: int) -> np.ndarray:
        st = s.key
        v = np.array(st.s, dtype=float)
        if not st.frozen and not st.fix[a]:
            v[a] = -v[a]
        return v

    def raw_policy_features(self, s: State, a: int) -> np.ndarray:
        if s.terminal or s.key == GAME_OVER:
            return np.zeros(1 + self.p)
        return np.concatenate([[float(self.p)], self.next_vector(s, a)])

    def policy_features(self, s: State, a: int) -> np.ndarray:
        return self.raw_policy_features(s, a) / self.policy_scale

    def policy_param(self) -> np.ndarray:
        return np.concatenate([[1.0], self.goal.astype(float)])

    def metadata(self) -> dict:
        return {"p": self.p, "K": self.K, "goal": self.goal.tolist(),
                "value_scale": self.value_scale, "policy_scale": self.policy_scale,
                "final_reward": self.final_reward}


def hypercube_from_config(cfg: dict) -> HypercubeMDP:
    """Build from ``{p, K, goal | seed, feature_kind, final_reward}``; ``reward_kind`` is an alias."""
    try:
        p, K = int(cfg["p"]), int(cfg["K"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"hypercube config needs integer p and K: {exc}") from exc
    if cfg.get("feature_kind", "value") not in ("value", "policy"):
        raise InvalidConfig("feature_kind must be 'value' or 'policy'")
    if "goal" in cfg and cfg["goal"] is not None:
        goal = np.asarray(cfg["goal"], dtype=int)
    else:
        goal = random_goal(p, make_rng(int(cfg.get("seed", 0))))
    return HypercubeMDP(p, K, goal, final_reward=cfg.get("final_reward", cfg.get("reward_kind", "bernoulli")))
