import math

import numpy as np
import pytest

from delphi.algorithm import compute_hyperparameters
from delphi.environments import TabularMDP, random_tabular
from delphi.errors import DeterminismViolation, InvalidArgument, TerminalStep, Unsupported
from delphi.exact import exact_value
from delphi.mdp import Environment, FeatureMap, State, Simulator
from delphi.td import measure_td, measure_transition, q_td_vectors, true_td

from conftest import chain_mdp


def two_layer(reward=0.5, bernoulli=False, d=4):
    P = [np.array([[[1.0]]])]
    phi = np.eye(d)[:2]
    return TabularMDP([1, 1], 1, P, [[reward], [0.0]], [[bernoulli], [False]], phi, [1.0])


class SampleOnly(Environment):
    def __init__(self):
        self.horizon, self.num_actions = 1, 1
        self.feature_map = FeatureMap(1, lambda s: np.ones(1))

    def sample_start(self, rng):
        return State(0, 1)

    def sample(self, s, a, rng):
        return 0.0, self.terminal


def test_deterministic_vector_exact():
    sim = Simulator(two_layer(), 0)
    for n in (1, 7):
        td = measure_td(sim, 0, n)
        assert np.array_equal(td.values, [0.5, -1.0, 1.0, 0.0, 0.0])
        assert td.n == n


def test_bernoulli_reward_coordinate():
    sim = Simulator(two_layer(bernoulli=True), 3)
    assert abs(measure_td(sim, 0, 10_000).reward - 0.5) <= 0.02


def test_restores_state_and_counts():
    mdp, _ = random_tabular(1, (1, 3, 2), 2)
    sim = Simulator(mdp, 2)
    s = sim.current
    measure_td(sim, 1, 37)
    assert sim.current == s and sim.samples == 37


def test_errors():
    sim = Simulator(two_layer(), 0)
    with pytest.raises(InvalidArgument):
        measure_td(sim, 0, 0)
    sim.step(0)
    sim.step(0)
    with pytest.raises(TerminalStep):
        measure_td(sim, 0, 1)


def test_true_td_needs_tables():
    env = SampleOnly()
    with pytest.raises(Unsupported):
        true_td(env, State(0, 1), 0)


def test_expert_action_orthogonal_to_value_parameter():
    mdp, expert = random_tabular(5, (1, 2, 3), 3)
    vo = exact_value(mdp, expert)
    theta = np.array([vo.v[s] for s in mdp.states()])
    for s in mdp.states():
        assert abs(true_td(mdp, s, int(expert[s.key])).residual(theta)) <= 1e-12


def test_deterministic_true_equals_single_sample():
    mdp, _ = random_tabular(6, (1, 2, 2), 2, deterministic=True, bernoulli=False)
    sim = Simulator(mdp, 0)
    for s in mdp.states():
        for a in range(2):
            sim.teleport(s)
            assert np.array_equal(measure_td(sim, a, 1).values, true_td(mdp, s, a).values)


def test_non_expert_residual_by_hand(three_state):
    # expert: s0 -> a0 (0.2 + 1.0), s1 -> a0, s2 -> a1; values v = (1.2, 1.0, 0.4)
    theta = np.array([1.2, 1.0, 0.4])
    s0 = three_state.state(0)
    # a1 at s0: 0.5 + v(s2) - v(s0) = 0.5 + 0.4 - 1.2 = -0.3
    assert true_td(three_state, s0, 1).residual(theta) == pytest.approx(-0.3, abs=1e-15)
    # a1 at s1: 0.0 + 0 - 1.0 = -1.0
    assert true_td(three_state, three_state.state(1), 1).residual(theta) == pytest.approx(-1.0)


def test_measured_expert_residual_within_eval_accuracy():
    mdp, expert = random_tabular(7, (1, 2, 2, 3), 3, min_prob=0.05)
    vo = exact_value(mdp, expert)
    theta = np.array([vo.v[s] for s in mdp.states()])
    B = math.ceil(np.linalg.norm(theta))
    hp = compute_hyperparameters(8, 4, 3, B, 0.1, 0.1, {"n_eval": 500, "n_rollout": 30})
    sim = Simulator(mdp, 11)
    worst = 0.0
    for s in mdp.states():
        sim.teleport(s)
        worst = max(worst, abs(measure_td(sim, int(expert[s.key]), hp.n_eval).residual(theta)))
    assert worst <= hp.eps_bar


def test_concentration_suite():
    mdp, _ = random_tabular(8, (1, 4), 2, min_prob=0.05)
    d, delta, n = 5, 0.1, 200
    hp = compute_hyperparameters(d, 2, 2, 2.0, 0.5, delta, {"n_eval": n, "N": 100})
    s = mdp.state(0)
    exact = true_td(mdp, s, 0).values
    sim = Simulator(mdp, 12)
    bad = sum(np.max(np.abs(measure_td(sim, 0, n).values - exact)) > hp.eps_eval for _ in range(200))
    assert bad / 200 < delta


def test_measure_transition_unique_successor():
    sim = Simulator(chain_mdp([[0.5], [0.0]], bernoulli=True), 0)
    r, nxt = measure_transition(sim, 0, 2000)
    assert nxt == State(1, 2) and abs(r - 0.5) < 0.05
    assert sim.current == State(0, 1)


def test_measure_transition_rejects_stochastic():
    mdp, _ = random_tabular(1, (1, 3), 1, min_prob=0.2)
    with pytest.raises(DeterminismViolation):
        measure_transition(Simulator(mdp, 0), 0, 100)


def test_q_vectors_terminal_successor():
    from delphi.mdp import ActionFeatureMap

    qf = ActionFeatureMap(2, lambda s, a: np.eye(2)[a])
    s = State(0, 1)
    vecs = q_td_vectors(0.4, s, 1, State("terminal", 2, True), qf, 2)
    assert len(vecs) == 1
    assert np.array_equal(vecs[0].values, [0.4, 0.0, -1.0])
    vecs = q_td_vectors(0.4, s, 1, State(1, 2), qf, 2)
    assert [v.values.tolist() for v in vecs] == [[0.4, 1.0, -1.0], [0.4, 0.0, 0.0]]
