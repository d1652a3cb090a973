"""Layered tabular MDPs, their JSON form, and random realizable instances."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InvalidConfig, UnknownState
from ..mdp import Environment, FeatureMap, State, make_rng

_TOL = 1e-9


class TabularMDP(Environment):
    """Finite layered MDP with explicit tables.

    States are numbered globally in layer order; ``State.key`` is that global
    index. ``P[h]`` has shape ``(n_h, A, n_{h+1})`` for ``h < H`` and the last
    layer always moves to the terminal state.

    Parameters
    ----------
    layers : sequence of int
        Number of states in each layer ``1..H``.
    P : list of ndarray
        ``H - 1`` transition tensors between consecutive layers.
    r_mean : ndarray, shape (S, A)
        Mean rewards indexed by global state.
    r_bernoulli : ndarray of bool, shape (S, A)
        True where the reward is a Bernoulli draw with the given mean.
    phi : ndarray, shape (S, d)
        Feature vector of every non-terminal state.
    start : ndarray, shape (n_1,)
        Start distribution over the first layer.
    """

    def __init__(self, layers, num_actions, P, r_mean, r_bernoulli, phi, start,
                 reward_range=(0.0, 1.0)):
        self.layers = [int(n) for n in layers]
        self.horizon = len(self.layers)
        self.num_actions = int(num_actions)
        self.reward_range = tuple(reward_range)
        if self.horizon < 1 or min(self.layers) < 1 or self.num_actions < 1:
            raise InvalidConfig("need at least one layer, one state per layer and one action")
        self.offsets = np.concatenate([[0], np.cumsum(self.layers)]).astype(int)
        self.num_states = int(self.offsets[-1])
        S, A = self.num_states, self.num_actions

        self.P = [np.asarray(p, dtype=float) for p in P]
        if len(self.P) != self.horizon - 1:
            raise InvalidConfig(f"expected {self.horizon - 1} transition tensors")
        for h, p in enumerate(self.P):
            want = (self.layers[h], A, self.layers[h + 1])
            if p.shape != want:
                raise InvalidConfig(f"P[{h}] has shape {p.shape}, expected {want}")
            if np.any(p < -_TOL) or np.any(np.abs(p.sum(-1) - 1) > 1e-9):
                raise InvalidConfig(f"P[{h}] rows must be probability vectors")
        self._cum = [np.cumsum(np.clip(p, 0, None), axis=-1) for p in self.P]

        self.r_mean = np.asarray(r_mean, dtype=float).reshape(S, A)
        self.r_bernoulli = np.asarray(r_bernoulli, dtype=bool).reshape(S, A)
        lo, hi = self.reward_range
        if np.any(self.r_mean < lo - _TOL) or np.any(self.r_mean > hi + _TOL):
            raise InvalidConfig(f"reward means must lie in [{lo}, {hi}]")
        if np.any(self.r_bernoulli & ((self.r_mean < -_TOL) | (self.r_mean > 1 + _TOL))):
            raise InvalidConfig("Bernoulli reward means must lie in [0, 1]")

        self.phi = np.asarray(phi, dtype=float)
        if self.phi.ndim != 2 or self.phi.shape[0] != S:
            raise InvalidConfig(f"phi must have shape ({S}, d)")
        if np.any(np.linalg.norm(self.phi, axis=1) > 1 + _TOL):
            raise InvalidConfig("feature vectors must have norm <= 1")
        self.feature_map = FeatureMap(self.phi.shape[1], self._features)

        self.start = np.asarray(start, dtype=float)
        if self.start.shape != (self.layers[0],) or np.any(self.start < -_TOL) or \
                abs(self.start.sum() - 1) > 1e-9:
            raise InvalidConfig("start must be a probability vector over the first layer")

    # -- indexing --------------------------------------------------------
    def state(self, index: int) -> State:
        if not 0 <= index < self.num_states:
            raise UnknownState(index)
        h = int(np.searchsorted(self.offsets, index, side="right"))
        return State(int(index), h)

    def states(self) -> list:
        return [self.state(i) for i in range(self.num_states)]

    def layer_states(self, h: int) -> list:
        return [State(i, h) for i in range(self.offsets[h - 1], self.offsets[h])]

    def _local(self, s: State) -> int:
        if s.terminal or not isinstance(s.key, (int, np.integer)) or \
                not 0 <= s.key < self.num_states or self.state(s.key).h != s.h:
            raise UnknownState(s)
        return int(s.key) - int(self.offsets[s.h - 1])

    def _features(self, s: State) -> np.ndarray:
        self._local(s)
        return self.phi[s.key]

    # -- exact model -----------------------------------------------------
    def start_distribution(self):
        return [(State(i, 1), float(p)) for i, p in enumerate(self.start) if p > 0]

    def transitions(self, s: State, a: int):
        i = self._local(s)
        if s.h == self.horizon:
            return [(self.terminal, 1.0)]
        row = self.P[s.h - 1][i, a]
        base = int(self.offsets[s.h])
        return [(State(base + j, s.h + 1), float(p)) for j, p in enumerate(row) if p > 0]

    def mean_reward(self, s: State, a: int) -> float:
        self._local(s)
        return float(self.r_mean[s.key, a])

    def reward_distribution(self, s: State, a: int):
        m = self.mean_reward(s, a)
        if self.r_bernoulli[s.key, a]:
            return [(1.0, m), (0.0, 1.0 - m)]
        return [(m, 1.0)]

    def is_deterministic(self) -> bool:
        dyn = all(np.all(np.isclose(p.max(-1), 1.0)) for p in self.P)
        start = np.isclose(self.start.max(), 1.0)
        return bool(dyn and start)

    # -- sampling --------------------------------------------------------
    def sample_start(self, rng):
        if len(self.start) == 1:
            return State(0, 1)
        j = int(np.searchsorted(np.cumsum(self.start), rng.random(), side="right"))
        return State(min(j, len(self.start) - 1), 1)

    def _reward(self, s, a, rng, n=None):
        mean = self.r_mean[s.key, a]
        if self.r_bernoulli[s.key, a]:
            u = rng.random() if n is None else rng.random(n)
            return (u < mean).astype(float) if n is not None else float(u < mean)
        return mean if n is None else np.full(n, mean)

    def sample(self, s, a, rng):
        i = self._local(s)
        r = self._reward(s, a, rng)
        if s.h == self.horizon:
            return r, self.terminal
        cum = self._cum[s.h - 1][i, a]
        j = min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)
        return r, State(int(self.offsets[s.h]) + j, s.h + 1)

    def sample_batch(self, s, a, n, rng):
        i = self._local(s)
        rewards = self._reward(s, a, rng, n)
        if s.h == self.horizon:
            return rewards, [(self.terminal, n)]
        cum = self._cum[s.h - 1][i, a]
        js = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
        counts = np.bincount(js, minlength=len(cum))
        base = int(self.offsets[s.h])
        return rewards, [(State(base + j, s.h + 1), int(c)) for j, c in enumerate(counts) if c]

    def state_id(self, s: State) -> str:
        return "terminal" if s.terminal else str(int(s.key))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        S, A = self.num_states, self.num_actions
        P_rows = []
        for g in range(S):
            s = self.state(g)
            i = self._local(s)
            if s.h == self.horizon:
                P_rows.append([[] for _ in range(A)])
            else:
                P_rows.append([self.P[s.h - 1][i, a].tolist() for a in range(A)])
        r = [[{"mean": float(self.r_mean[g, a]),
               "kind": "bernoulli" if self.r_bernoulli[g, a] else "deterministic"}
              for a in range(A)] for g in range(S)]
        out = {
            "H": self.horizon,
            "A": A,
            "states_per_layer": list(self.layers),
            "P": P_rows,
            "r": r,
            "phi": self.phi.tolist(),
            "start": self.start.tolist(),
        }
        if self.reward_range != (0.0, 1.0):
            out["reward_range"] = list(self.reward_range)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDP":
        try:
            H, A = int(doc["H"]), int(doc["A"])
            layers = [int(n) for n in doc["states_per_layer"]]
            if len(layers) != H:
                raise InvalidConfig("states_per_layer must have H entries")
            offsets = np.concatenate([[0], np.cumsum(layers)]).astype(int)
            S = int(offsets[-1])
            P_rows, r_rows = doc["P"], doc["r"]
            if len(P_rows) != S or len(r_rows) != S:
                raise InvalidConfig(f"P and r need one entry per state ({S})")
            P = []
            for h in range(H - 1):
                block = [P_rows[g] for g in range(offsets[h], offsets[h + 1])]
                P.append(np.array(block, dtype=float))
            r_mean = np.array([[float(x["mean"]) for x in row] for row in r_rows])
            kinds = [[x.get("kind", "deterministic") for x in row] for row in r_rows]
            for k in (k for row in kinds for k in row):
                if k not in ("deterministic", "bernoulli"):
                    raise InvalidConfig(f"unknown reward kind {k!r}")
            r_bern = np.array([[k == "bernoulli" for k in row] for row in kinds])
            return cls(layers, A, P, r_mean, r_bern, np.array(doc["phi"], dtype=float),
                       np.array(doc["start"], dtype=float),
                       reward_range=tuple(doc.get("reward_range", (0.0, 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"malformed tabular MDP: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "TabularMDP":
        return cls.from_dict(json.loads(Path(path).read_text()))


def one_hot_features(num_states: int) -> np.ndarray:
    return np.eye(num_states)


def random_tabular(seed, layers, num_actions, *, deterministic=False, bernoulli=True,
                   gap=0.0, min_prob=0.0, features=None):
    """Random layered MDP whose expert (first returned policy) leads every action by ``gap``.

    The returned expert table is optimal, and every other action's action value
    is at least ``gap`` below the expert's. Features default to one-hot, which
    makes any value function exactly linear.

    Returns
    -------
    mdp : TabularMDP
    expert : ndarray of int, shape (S,)
    """
    rng = make_rng(seed)
    layers = [int(n) for n in layers]
    H, A = len(layers), int(num_actions)
    offsets = np.concatenate([[0], np.cumsum(layers)]).astype(int)
    S = int(offsets[-1])
    P = []
    for h in range(H - 1):
        n0, n1 = layers[h], layers[h + 1]
        if deterministic:
            p = np.zeros((n0, A, n1))
            idx = rng.integers(n1, size=(n0, A))
            np.put_along_axis(p, idx[..., None], 1.0, axis=-1)
        else:
            p = rng.dirichlet(np.ones(n1), size=(n0, A))
            p = min_prob + (1 - n1 * min_prob) * p
        P.append(p)

    r = np.zeros((S, A))
    expert = np.zeros(S, dtype=int)
    v = np.zeros(S + 1)
    for h in reversed(range(H)):
        for i in range(layers[h]):
            g = offsets[h] + i
            if h == H - 1:
                ev = np.zeros(A)
            else:
                ev = P[h][i] @ v[offsets[h + 1]:offsets[h + 2]]
            ok = np.flatnonzero(ev >= ev.max() - (1 - gap) + 1e-12)
            e = int(rng.choice(ok))
            need = max(0.0, float(np.max(np.delete(ev, e) - ev[e], initial=-np.inf)) + gap)
            r[g, e] = rng.uniform(min(need, 1.0), 1.0)
            for a in range(A):
                if a != e:
                    cap = min(1.0, r[g, e] + ev[e] - ev[a] - gap)
                    r[g, a] = rng.uniform(0.0, max(cap, 0.0))
            expert[g] = e
            v[g] = r[g, e] + ev[e]
    phi = one_hot_features(S) if features is None else np.asarray(features, dtype=float)
    start = np.zeros(layers[0])
    start[0 if deterministic else rng.integers(layers[0])] = 1.0
    r_bern = np.full((S, A), bool(bernoulli))
    return TabularMDP(layers, A, P, r, r_bern, phi, start), expert
