"""Reward-offset and feature-perturbation wrappers."""
from __future__ import annotations

import hashlib

import numpy as np

from ..errors import InvalidArgument
from ..mdp import Environment, FeatureMap, Simulator, State


def _pair_uniform(seed: int, key: str) -> float:
    """Deterministic uniform draw in [0, 1) tied to ``key``."""
    digest = hashlib.blake2b(f"{seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


class InaccurateEnv(Environment):
    """Observed reward is ``clip(r + offset(s, a), 0, 1)`` with ``|offset| <= lam``.

    ``offset_rule`` is ``"constant"`` (every pair gets ``+lam``), ``"random"``
    (a fixed uniform draw in ``[-lam, lam]`` per pair), or a callable
    ``(state, action) -> offset``. Transitions are untouched.
    """

    def __init__(self, inner: Environment, lam: float, offset_rule="constant", seed: int = 0):
        if lam < 0:
            raise InvalidArgument("lam must be non-negative")
        self.inner = inner
        self.lam = float(lam)
        self.offset_rule = offset_rule
        self.seed = int(seed)
        self.horizon = inner.horizon
        self.num_actions = inner.num_actions
        self.feature_map = inner.feature_map
        self.reward_range = (0.0, 1.0)

    def offset(self, s: State, a: int) -> float:
        if self.lam == 0:
            return 0.0
        if callable(self.offset_rule):
            off = float(self.offset_rule(s, a))
            if abs(off) > self.lam + 1e-12:
                raise InvalidArgument(f"offset {off} exceeds lam={self.lam}")
            return off
        if self.offset_rule == "constant":
            return self.lam
        if self.offset_rule == "random":
            u = _pair_uniform(self.seed, f"{self.inner.state_id(s)}|{a}")
            return self.lam * (2 * u - 1)
        raise InvalidArgument(f"unknown offset rule {self.offset_rule!r}")

    def sample(self, s, a, rng):
        r, sp = self.inner.sample(s, a, rng)
        return float(np.clip(r + self.offset(s, a), 0.0, 1.0)), sp

    def sample_batch(self, s, a, n, rng):
        rewards, nxt = self.inner.sample_batch(s, a, n, rng)
        return np.clip(rewards + self.offset(s, a), 0.0, 1.0), nxt

    def sample_start(self, rng):
        return self.inner.sample_start(rng)

    def start_distribution(self):
        return self.inner.start_distribution()

    def transitions(self, s, a):
        return self.inner.transitions(s, a)

    def reward_distribution(self, s, a):
        off = self.offset(s, a)
        return [(float(np.clip(v + off, 0.0, 1.0)), p) for v, p in self.inner.reward_distribution(s, a)]

    def mean_reward(self, s, a):
        return float(sum(v * p for v, p in self.reward_distribution(s, a)))

    def state_id(self, s):
        return self.inner.state_id(s)


def wrap_inaccurate(sim: Simulator, lam: float, offset_rule="constant", seed: int = 0) -> Simulator:
    """New simulator over ``InaccurateEnv(sim.env, ...)`` with a forked random stream."""
    env = InaccurateEnv(sim.env, lam, offset_rule, seed)
    return Simulator(env, sim._seedseq.spawn(1)[0])


class PerturbedFeatures(Environment):
    """Shrinks features by ``1 - eta / (2B)`` and adds a fixed per-state vector of norm ``<= eta / (2B)``.

    For any parameter of norm at most ``B`` the predicted value moves by at most ``eta``.
    """

    def __init__(self, inner: Environment, eta: float, B: float, seed: int = 0):
        if eta < 0 or B <= 0 or eta > 2 * B:
            raise InvalidArgument("need eta >= 0, B > 0 and eta <= 2B")
        self.inner = inner
        self.eta, self.B, self.seed = float(eta), float(B), int(seed)
        self.horizon = inner.horizon
        self.num_actions = inner.num_actions
        self.reward_range = inner.reward_range
        self.feature_map = FeatureMap(inner.feature_map.dim, self._features)

    def perturbation(self, s: State) -> np.ndarray:
        dim = self.inner.feature_map.dim
        digest = hashlib.blake2b(f"{self.seed}:{self.inner.state_id(s)}".encode(), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        u = rng.normal(size=dim)
        return u / np.linalg.norm(u) * rng.uniform(0, 1) * self.eta / (2 * self.B)

    def _features(self, s):
        base = self.inner.feature_map(s)
        return (1 - self.eta / (2 * self.B)) * base + self.perturbation(s)

    def sample(self, s, a, rng):
        return self.inner.sample(s, a, rng)

    def sample_batch(self, s, a, n, rng):
        return self.inner.sample_batch(s, a, n, rng)

    def sample_start(self, rng):
        return self.inner.sample_start(rng)

    def start_distribution(self):
        return self.inner.start_distribution()

    def transitions(self, s, a):
        return self.inner.transitions(s, a)

    def reward_distribution(self, s, a):
        return self.inner.reward_distribution(s, a)

    def mean_reward(self, s, a):
        return self.inner.mean_reward(s, a)

    def state_id(self, s):
        return self.inner.state_id(s)
