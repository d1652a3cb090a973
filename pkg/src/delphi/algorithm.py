"""Guess-and-check learner driven by expert queries at consistency breaks.

Each iteration picks the most optimistic parameter in the version space,
rolls the induced policy forward, and at every visited state checks whether
some action has a TD residual within tolerance. The first state with no such
action triggers one expert query; a refined TD measurement of the expert
action becomes a new slab constraint.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import DeterminismViolation, InvalidArgument, NoAction, Unsupported
from .expert import ExpertOracle
from .mdp import ActionFeatureMap, FeatureMap, Simulator, State
from .td import TDVector, measure_td, measure_transition, q_td_vectors, true_td
from .version_space import VersionSpace, optimistic_argmax

INT_FIELDS = ("E_d", "n_rollout", "N", "n_eval", "n_refine")
FLOAT_FIELDS = ("eps_eval", "eps_bar", "eps_tol", "eps_roll", "tau")


@dataclass
class HyperParams:
    d: int
    H: int
    A: int
    B: float
    eps_target: float
    delta: float
    E_d: int
    n_rollout: int
    N: int
    n_eval: int
    eps_eval: float
    eps_bar: float
    eps_tol: float
    eps_roll: float
    tau: float
    n_refine: int
    threshold_rule: str = "proof"
    overridden: frozenset = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["overridden"] = sorted(self.overridden)
        return out


def compute_hyperparameters(d, H, A, B, eps_target, delta, overrides=None,
                            threshold_rule="proof") -> HyperParams:
    """Derive every field from its formula; ``overrides`` pins fields and later fields follow.

    ``threshold_rule="proof"`` sets the slab half-width to
    ``eps_bar / (2 sqrt(E_d))``; ``"pseudo"`` uses ``eps_tol``.
    """
    for name, val in (("d", d), ("H", H), ("A", A), ("B", B), ("eps_target", eps_target),
                      ("delta", delta)):
        if not (isinstance(val, (int, float, np.integer, np.floating)) and val > 0):
            raise InvalidArgument(f"{name} must be positive, got {val!r}")
    if eps_target > H:
        raise InvalidArgument("eps_target must not exceed H")
    if threshold_rule not in ("proof", "pseudo"):
        raise InvalidArgument(f"unknown threshold rule {threshold_rule!r}")
    ov = dict(overrides or {})
    unknown = set(ov) - set(INT_FIELDS) - set(FLOAT_FIELDS)
    if unknown:
        raise InvalidArgument(f"unknown hyperparameter override(s): {sorted(unknown)}")
    for k, v in ov.items():
        if not v > 0:
            raise InvalidArgument(f"override {k} must be positive")

    def pick(name, formula):
        if name in ov:
            return int(math.ceil(ov[name])) if name in INT_FIELDS else float(ov[name])
        val = formula()
        return int(math.ceil(val)) if name in INT_FIELDS else float(val)

    e, eps = math.e, float(eps_target)
    E_d = pick("E_d", lambda: 3 * d * e / (e - 1) * math.log(3 + 3 * (2 * B / eps) ** 2) + 1)
    log_roll = math.log(2 * (E_d + 1) / delta)
    n_rollout = pick("n_rollout", lambda: 2 * H**2 * (1 + 2 * B) ** 2 * log_roll / eps**2)
    N = pick("N", lambda: (E_d + 1) * n_rollout * H * A)
    log_eval = math.log(2 * (d + 1) * N / delta)
    n_eval = pick("n_eval", lambda: 50 * H**2 * (1 + B**2) * (d + 1) * log_eval / eps**2)
    eps_eval = pick("eps_eval", lambda: math.sqrt(log_eval / (2 * n_eval)))
    eps_bar = pick("eps_bar", lambda: math.sqrt(1 + B**2) * math.sqrt(d + 1) * eps_eval)
    eps_tol = pick("eps_tol", lambda: 4 * eps_bar)
    eps_roll = pick("eps_roll", lambda: H * (1 + 2 * B) * math.sqrt(log_roll / (2 * n_rollout)))
    tau = pick("tau", lambda: eps_bar / (2 * math.sqrt(E_d)) if threshold_rule == "proof"
               else eps_tol)
    n_refine = pick("n_refine", lambda: 4 * E_d * n_eval)
    return HyperParams(int(d), int(H), int(A), float(B), eps, float(delta), E_d, n_rollout, N,
                       n_eval, eps_eval, eps_bar, eps_tol, eps_roll, tau, n_refine,
                       threshold_rule, frozenset(ov))


def exact_measurement_params(d, H, A, B, eps_target=0.1, delta=0.1, eps_bar=1e-4, n_rollout=1,
                             **overrides):
    """Parameters for zero-variance measurements: one sample each, tiny tolerances.

    One rollout per iteration suffices when the dynamics and start are deterministic.
    """
    ov = {"n_eval": 1, "n_refine": 1, "eps_bar": eps_bar, "n_rollout": n_rollout}
    ov.update(overrides)
    return compute_hyperparameters(d, H, A, B, eps_target, delta, ov)


def inaccuracy_regime(params: HyperParams) -> HyperParams:
    """Quadruple ``n_eval`` (and the refined count) while keeping every threshold."""
    out = HyperParams(**{f.name: getattr(params, f.name) for f in fields(HyperParams)})
    out.n_eval = 4 * params.n_eval
    out.n_refine = 4 * params.E_d * out.n_eval
    out.overridden = params.overridden | {"n_eval", "n_refine"}
    return out


def tolerated_inaccuracy(params: HyperParams) -> float:
    return params.eps_bar / (4 * math.sqrt(params.E_d))


def tolerated_misspecification(params: HyperParams) -> float:
    return params.eps_bar / (8 * math.sqrt(params.E_d))


# -- consistency -----------------------------------------------------------

def residuals(tds, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.array([abs(td.residual(theta)) if isinstance(td, TDVector)
                     else abs(float(td[0] + np.dot(td[1:], theta))) for td in tds])


def consistency_test(tds, theta, eps_tol):
    """``(consistent, best_action)``: consistent iff the smallest absolute residual is ``<= eps_tol``.

    Ties go to the lowest action index.
    """
    if len(tds) == 0:
        raise InvalidArgument("need at least one TD vector")
    res = residuals(tds, theta)
    best = int(np.argmin(res))
    return bool(res[best] <= eps_tol), best


# -- records ----------------------------------------------------------------

@dataclass
class IterationRow:
    t: int
    optimistic_value: float
    break_state: str = ""
    residual: float = float("nan")
    oracle_action: int = -1


@dataclass
class RunStats:
    oracle_calls: int = 0
    exploratory_samples: int = 0
    rollout_samples: int = 0
    start_samples: int = 0
    iterations: int = 0
    optimistic_values: list = field(default_factory=list)
    termination: str = ""
    theta: np.ndarray | None = None
    thetas: list = field(default_factory=list)
    start_actions: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    constraints: tuple = ()

    def summary(self) -> dict:
        return {
            "oracle_calls": self.oracle_calls,
            "exploratory_samples": self.exploratory_samples,
            "rollout_samples": self.rollout_samples,
            "iterations": self.iterations,
            "termination": self.termination,
            "final_optimistic_value": self.optimistic_values[-1] if self.optimistic_values else None,
            "theta": None if self.theta is None else [float(x) for x in self.theta],
        }


@dataclass
class InducedPolicy:
    """Plays the action with the smallest measured TD residual under ``theta``."""

    theta: np.ndarray
    n_eval: int
    feature_map: FeatureMap | None = None
    exact: bool = False

    def measure(self, sim: Simulator, a: int) -> TDVector:
        return _measure(sim, a, self.n_eval, self.feature_map, self.exact)

    def __call__(self, sim: Simulator) -> int:
        return induced_policy_action(self, sim)


def _measure(sim, a, n, fm, exact, tag="measured") -> TDVector:
    if exact:
        try:
            return true_td(sim.env, sim.current, a, fm)
        except Unsupported:
            pass
    return measure_td(sim, a, n, fm, tag)


def induced_policy_action(policy: InducedPolicy, sim: Simulator) -> int:
    """Measure all actions at the simulator's state and return the smallest-residual one."""
    if sim.current.terminal:
        raise NoAction("no action at the terminal layer")
    tds = [policy.measure(sim, a) for a in range(sim.num_actions)]
    return consistency_test(tds, policy.theta, np.inf)[1]


def estimate_start_features(sim: Simulator, n: int, feature_map: FeatureMap | None = None):
    """Average features over ``n`` restarts; no ``step`` samples are used."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    fm = feature_map or sim.env.feature_map
    return sum(fm(sim.restart()) for _ in range(n)) / n


def _start_features(sim, fm, n):
    try:
        dist = sim.env.start_distribution()
    except Unsupported:
        dist = None
    if dist is not None and len(dist) == 1:
        return fm(dist[0][0]), 0
    return estimate_start_features(sim, n, fm), n


# -- value-based driver -------------------------------------------------------

def run_delphi(sim: Simulator, oracle: ExpertOracle, feature_map: FeatureMap | None,
               params: HyperParams, *, start_features=None, exact_measurement=False):
    """Run the learner.

    Returns ``(theta, InducedPolicy, RunStats)``. ``exact_measurement`` swaps
    sampled TD vectors for exact ones where the model exposes tables (one
    sample each otherwise). The simulator's sample counter equals
    ``exploratory_samples + rollout_samples`` afterwards.
    """
    fm = feature_map or sim.env.feature_map
    H, A = sim.horizon, sim.num_actions
    stats = RunStats()
    if start_features is None:
        start_features, stats.start_samples = _start_features(sim, fm, params.n_eval)
    c = np.asarray(start_features, dtype=float)
    space = VersionSpace(params.B, fm.dim, max_constraints=params.E_d + 1)
    samples0 = sim.samples
    theta = None
    for t in range(1, params.E_d + 2):
        oracle.iteration = t
        sol = optimistic_argmax(space, c)
        theta = sol.theta
        stats.thetas.append(theta)
        stats.optimistic_values.append(sol.value)
        row = IterationRow(t, sol.value)
        stats.rows.append(row)
        stats.iterations = t
        broke = False
        for _ in range(params.n_rollout):
            s = sim.restart()
            for _h in range(H):
                if s.terminal:
                    break
                before = sim.samples
                tds = [_measure(sim, a, params.n_eval, fm, exact_measurement) for a in range(A)]
                ok, best = consistency_test(tds, theta, params.eps_tol)
                if not ok:
                    a_exp = oracle.query(s)
                    refined = _measure(sim, a_exp, params.n_refine, fm, exact_measurement, "refined")
                    stats.exploratory_samples += sim.samples - before
                    space = space.add_constraint(refined.values, params.tau,
                                                 origin=sim.env.state_id(s), iteration=t)
                    row.break_state = sim.env.state_id(s)
                    row.residual = float(residuals(tds, theta).min())
                    row.oracle_action = a_exp
                    broke = True
                    break
                stats.exploratory_samples += sim.samples - before
                _, s = sim.step(best)
                stats.rollout_samples += 1
            if broke:
                break
        if not broke:
            stats.termination = "consistent"
            break
    else:
        stats.termination = "exhausted"
    stats.oracle_calls = len(space.constraints)
    stats.constraints = space.constraints
    stats.theta = theta
    assert sim.samples - samples0 == stats.exploratory_samples + stats.rollout_samples
    n_pol = 1 if exact_measurement else params.n_eval
    return theta, InducedPolicy(theta, n_pol, fm, exact_measurement), stats


def freeze_policy(policy: InducedPolicy, env, states, seed=0) -> dict:
    """Fix the induced policy's choice at each state using one seeded measurement round per state."""
    sim = Simulator(env, seed)
    table = {}
    for s in states:
        if s.terminal:
            continue
        sim.teleport(s)
        table[s] = induced_policy_action(policy, sim)
    return table


# -- q-based driver (deterministic dynamics) ------------------------------------

@dataclass
class QPolicy:
    """Greedy first action, then the successor action with the smallest q-TD residual.

    ``table`` maps visited states to actions along the single deterministic path.
    """

    theta: np.ndarray
    table: dict
    start_action: int


def _optimistic_q(space, qfeat, s0, A):
    best = None
    for a in range(A):
        sol = optimistic_argmax(space, qfeat(s0, a))
        if best is None or sol.value > best[0].value + 1e-12:
            best = (sol, a)
    return best


def run_delphi_q(sim: Simulator, oracle: ExpertOracle, qfeat: ActionFeatureMap,
                 params: HyperParams, *, exact_measurement=False):
    """Action-value variant for deterministic dynamics.

    The TD vector of ``(s, a)`` with successor action ``a'`` is
    ``r(s, a) (+) (phi(s', a') - phi(s, a))``. A break at ``s'`` queries the
    expert there; a break at a terminal successor adds the constraint without
    a query. Returns ``(theta, QPolicy, RunStats)``.
    """
    H, A = sim.horizon, sim.num_actions
    stats = RunStats()
    s0 = sim.restart()
    try:
        if len(sim.env.start_distribution()) != 1:
            raise Unsupported("the action-value variant needs a deterministic start")
    except Unsupported as exc:
        if "deterministic start" in str(exc):
            raise
    space = VersionSpace(params.B, qfeat.dim, max_constraints=params.E_d + 1)
    samples0 = sim.samples
    theta, a0 = None, 0
    for t in range(1, params.E_d + 2):
        oracle.iteration = t
        sol, a0 = _optimistic_q(space, qfeat, s0, A)
        theta = sol.theta
        stats.thetas.append(theta)
        stats.start_actions.append(a0)
        stats.optimistic_values.append(sol.value)
        row = IterationRow(t, sol.value)
        stats.rows.append(row)
        stats.iterations = t
        broke = False
        for _ in range(params.n_rollout):
            s = sim.restart()
            a = a0
            for _h in range(H):
                before = sim.samples
                r, sp = _q_transition(sim, a, params.n_eval, exact_measurement)
                tds = q_td_vectors(r, s, a, sp, qfeat, A, params.n_eval)
                ok, best = consistency_test(tds, theta, params.eps_tol)
                if not ok:
                    if sp.terminal:
                        nxt = 0
                        row.oracle_action = -1
                    else:
                        nxt = oracle.query(sp)
                        row.oracle_action = nxt
                    r2, _ = _q_transition(sim, a, params.n_refine, exact_measurement)
                    refined = q_td_vectors(r2, s, a, sp, qfeat, A, params.n_refine, "refined")[nxt]
                    stats.exploratory_samples += sim.samples - before
                    space = space.add_constraint(refined.values, params.tau,
                                                 origin=sim.env.state_id(s), iteration=t)
                    row.break_state = sim.env.state_id(sp)
                    row.residual = float(residuals(tds, theta).min())
                    broke = True
                    break
                stats.exploratory_samples += sim.samples - before
                _, s_new = sim.step(a)
                stats.rollout_samples += 1
                if s_new != sp:
                    raise DeterminismViolation(f"action {a} at {s} reached {s_new} and {sp}")
                s, a = s_new, best
                if s.terminal:
                    break
            if broke:
                break
        if not broke:
            stats.termination = "consistent"
            break
    else:
        stats.termination = "exhausted"
    stats.oracle_calls = oracle_calls_q(stats)
    stats.constraints = space.constraints
    stats.theta = theta
    assert sim.samples - samples0 == stats.exploratory_samples + stats.rollout_samples
    return theta, QPolicy(theta, {}, a0), stats


def oracle_calls_q(stats: RunStats) -> int:
    return sum(1 for r in stats.rows if r.oracle_action >= 0)


def _q_transition(sim, a, n, exact):
    if exact:
        try:
            env, s = sim.env, sim.current
            succ = env.transitions(s, a)
            if len(succ) != 1:
                raise DeterminismViolation(f"{len(succ)} successors for action {a} at {s}")
            return env.mean_reward(s, a), succ[0][0]
        except Unsupported:
            n = 1
    return measure_transition(sim, a, n)


def trace_q_policy(policy: QPolicy, env, qfeat: ActionFeatureMap, n_eval: int, seed=0,
                   exact=False) -> dict:
    """Walk the deterministic path of a q-policy and return its ``{state: action}`` table."""
    sim = Simulator(env, seed)
    s = sim.restart()
    a = policy.start_action
    table = {}
    while not s.terminal:
        table[s] = a
        sim.teleport(s)
        r, sp = _q_transition(sim, a, n_eval, exact)
        if sp.terminal:
            break
        tds = q_td_vectors(r, s, a, sp, qfeat, env.num_actions, n_eval)
        _, best = consistency_test(tds, policy.theta, np.inf)
        s, a = sp, best
    policy.table = table
    return table


# -- rollouts ---------------------------------------------------------------

def evaluate_policy_rollouts(sim: Simulator, policy, m: int, delta: float = 0.05):
    """Mean return of ``m`` episodes and the Hoeffding half-width ``H sqrt(log(2/delta) / (2m))``.

    ``policy`` maps a state to an action, or is an :class:`InducedPolicy`
    (which measures at every visited state).
    """
    if m < 1:
        raise InvalidArgument("m must be >= 1")
    total = 0.0
    for _ in range(m):
        s = sim.restart()
        ret = 0.0
        while not s.terminal:
            a = policy(sim) if isinstance(policy, InducedPolicy) else int(policy(s))
            r, s = sim.step(a)
            ret += r
        total += ret
    half = sim.horizon * math.sqrt(math.log(2 / delta) / (2 * m))
    return total / m, half
