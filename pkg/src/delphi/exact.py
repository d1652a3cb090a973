"""Exact policy evaluation, backward induction and Eluder-sequence verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, InvalidArgument
from .mdp import Environment, State, reachable_states


@dataclass
class ValueTable:
    """State values (and optionally action values) on every reachable non-terminal state."""

    v: dict
    q: dict = field(default_factory=dict)
    start: list = field(default_factory=list)

    def __getitem__(self, s: State) -> float:
        if s.terminal:
            return 0.0
        return self.v[s]

    def start_value(self) -> float:
        return float(sum(p * self[s] for s, p in self.start))


def _as_policy(policy) -> Callable[[State], int]:
    if callable(policy):
        return policy
    if isinstance(policy, Mapping):
        return lambda s: int(policy[s])
    table = np.asarray(policy)
    return lambda s: int(table[s.key])


def _states(env: Environment) -> list:
    env.start_distribution()  # raises Unsupported for sample-only models
    if hasattr(env, "states"):
        states = list(env.states())
    else:
        states = reachable_states(env)
    return sorted(states, key=lambda s: -s.h)


def _backup(env, s, a, v) -> float:
    return env.mean_reward(s, a) + sum(p * (0.0 if sp.terminal else v[sp])
                                       for sp, p in env.transitions(s, a))


def exact_value(env: Environment, policy) -> ValueTable:
    """Backward induction for a fixed deterministic policy.

    ``policy`` is a callable ``State -> action``, a ``{State: action}``
    mapping, or an array indexed by ``State.key``.
    """
    pi = _as_policy(policy)
    v: dict = {}
    for s in _states(env):
        v[s] = _backup(env, s, pi(s), v)
    return ValueTable(v, start=env.start_distribution())


def exact_optimal(env: Environment):
    """Optimal values and a greedy policy (lowest action index on ties)."""
    v: dict = {}
    q: dict = {}
    pi: dict = {}
    for s in _states(env):
        qs = np.array([_backup(env, s, a, v) for a in range(env.num_actions)])
        a = int(np.flatnonzero(qs >= qs.max() - 1e-12)[0])
        q[s], pi[s], v[s] = qs, a, float(qs[a])
    return pi, ValueTable(v, q, start=env.start_distribution())


def exact_q(env: Environment, values: ValueTable) -> dict:
    """Action values ``r(s, a) + E v(s')`` for every state in ``values``."""
    return {s: np.array([_backup(env, s, a, values.v) for a in range(env.num_actions)])
            for s in values.v}


def bellman_residual(env: Environment, policy, values: ValueTable) -> float:
    pi = _as_policy(policy)
    return max((abs(values.v[s] - _backup(env, s, pi(s), values.v)) for s in values.v),
               default=0.0)


def linear_value_param(env: Environment, values: ValueTable) -> np.ndarray:
    """Least-squares parameter reproducing ``values`` with the environment's features."""
    states = list(values.v)
    X = np.array([env.feature_map(s) for s in states])
    y = np.array([values.v[s] for s in states])
    theta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return theta


# -- Eluder sequences ------------------------------------------------------

def _f(theta, x) -> float:
    return float(x[0] + np.dot(theta, x[1:]))


def verify_eluder_sequence(points, params, theta_star, eps):
    """Check ``(x_i, f_i)`` against reference ``theta_star`` at scale ``eps``.

    With ``f_t(x) = <1 (+) t, x>`` each index must satisfy
    ``|f_i(x_i) - f*(x_i)| > eps`` and ``sum_{j<i} (f_i(x_j) - f*(x_j))**2 <= eps**2``.

    Returns
    -------
    (ok, index) : (bool, int or None)
        ``index`` is the first violating position.
    """
    if len(points) != len(params):
        raise DimensionError("points and params must have equal length")
    theta_star = np.asarray(theta_star, dtype=float)
    xs = [np.asarray(x, dtype=float) for x in points]
    ts = [np.asarray(t, dtype=float) for t in params]
    for i, (x, t) in enumerate(zip(xs, ts)):
        if x.shape != (len(theta_star) + 1,) or t.shape != theta_star.shape:
            raise DimensionError(f"entry {i} has mismatched dimensions")
    for i, t in enumerate(ts):
        if not abs(_f(t, xs[i]) - _f(theta_star, xs[i])) > eps:
            return False, i
        hist = sum((_f(t, xs[j]) - _f(theta_star, xs[j])) ** 2 for j in range(i))
        if hist > eps ** 2:
            return False, i
    return True, None


def check_delphi_eluder(record, theta_star, eps_bar):
    """Verify a recorded run's ``(refined TD vector, chosen parameter)`` pairs form an Eluder sequence.

    ``record`` needs ``constraints`` (each with ``values`` and ``iteration``)
    and ``thetas`` (the parameter picked at every iteration, 1-based by
    position).
    """
    if record is None or getattr(record, "constraints", None) is None:
        raise InvalidArgument("run record carries no constraint dump")
    cons = record.constraints
    points = [c.values for c in cons]
    params = [record.thetas[c.iteration - 1] for c in cons]
    return verify_eluder_sequence(points, params, theta_star, eps_bar)


def eluder_bound(d: int, B: float, eps: float) -> float:
    """Length bound ``3d e/(e-1) ln(3 + 3 (2B/eps)^2) + 1`` for norm-``B`` linear classes."""
    e = np.e
    return 3 * d * e / (e - 1) * np.log(3 + 3 * (2 * B / eps) ** 2) + 1
