import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from delphi.environments import TabularMDP, one_hot_features, random_tabular
from delphi.errors import (
    InvalidAction,
    InvalidConfig,
    NoCheckpoint,
    TerminalStep,
    UnknownState,
)
from delphi.mdp import State, Simulator, reachable_states

from conftest import chain_mdp


def two_start_mdp():
    P = [np.array([[[1.0]], [[1.0]]])]
    r = np.zeros((3, 1))
    return TabularMDP([2, 1], 1, P, r, np.zeros((3, 1), bool), np.eye(3), [0.5, 0.5])


def three_outcome_mdp():
    P = [np.array([[[0.2, 0.3, 0.5]]])]
    return TabularMDP([1, 3], 1, P, np.zeros((4, 1)), np.zeros((4, 1), bool), np.eye(4), [1.0])


class TestStep:
    def test_deterministic_chain(self):
        sim = Simulator(chain_mdp([[1.0], [1.0]]), seed=0)
        r, nxt = sim.step(0)
        assert r == 1.0
        assert nxt.h == 2 and nxt.key == 1

    def test_bernoulli_mean_via_reset(self):
        sim = Simulator(chain_mdp([[0.5], [0.0]], bernoulli=True), seed=1)
        total = 0.0
        for _ in range(10_000):
            r, _ = sim.step(0)
            sim.reset_to_checkpoint()
            total += r
        assert abs(total / 10_000 - 0.5) <= 0.02

    def test_last_layer_goes_to_terminal_with_zero_features(self):
        mdp = chain_mdp([[0.0], [0.0]])
        sim = Simulator(mdp, seed=0)
        sim.step(0)
        _, nxt = sim.step(0)
        assert nxt.terminal and nxt.h == 3
        assert np.array_equal(mdp.feature_map(nxt), np.zeros(2))

    def test_terminal_step_raises(self):
        sim = Simulator(chain_mdp([[0.0]]), seed=0)
        sim.step(0)
        with pytest.raises(TerminalStep):
            sim.step(0)

    @pytest.mark.parametrize("a", [-1, 2, 1.5])
    def test_invalid_action(self, a):
        sim = Simulator(chain_mdp([[0.0, 0.0]], A=2), seed=0)
        with pytest.raises(InvalidAction):
            sim.step(a)

    def test_counter_and_checkpoint(self):
        sim = Simulator(chain_mdp([[0.0], [0.0], [0.0]]), seed=0)
        s0 = sim.current
        sim.step(0)
        assert sim.checkpoint == s0 and sim.samples == 1
        sim.reset_to_checkpoint()
        assert sim.samples == 1
        sim.restart()
        assert sim.samples == 1


class TestReset:
    def test_reset_returns_pre_step_state(self):
        sim = Simulator(chain_mdp([[0.0], [0.0]]), seed=0)
        s0 = sim.current
        sim.step(0)
        assert sim.reset_to_checkpoint() == s0
        assert sim.current == s0

    def test_reset_after_restart(self):
        sim = Simulator(chain_mdp([[0.0], [0.0]]), seed=0)
        sim.step(0)
        sim.restart()
        with pytest.raises(NoCheckpoint):
            sim.reset_to_checkpoint()

    def test_repeated_draws_are_iid(self):
        sim = Simulator(three_outcome_mdp(), seed=7)
        counts = np.zeros(3)
        for _ in range(10_000):
            _, nxt = sim.step(0)
            counts[nxt.key - 1] += 1
            sim.reset_to_checkpoint()
        _, pval = stats.chisquare(counts, 10_000 * np.array([0.2, 0.3, 0.5]))
        assert pval > 0.01

    def test_batched_draws_match_distribution(self):
        sim = Simulator(three_outcome_mdp(), seed=8)
        _, succ = sim.step_repeated(0, 10_000)
        counts = np.zeros(3)
        for s, c in succ:
            counts[s.key - 1] = c
        _, pval = stats.chisquare(counts, 10_000 * np.array([0.2, 0.3, 0.5]))
        assert pval > 0.01
        assert sim.samples == 10_000


class TestRestart:
    def test_deterministic_start(self):
        sim = Simulator(chain_mdp([[0.0]]), seed=3)
        assert all(sim.restart() == State(0, 1) for _ in range(20))

    def test_uniform_start_frequencies(self):
        sim = Simulator(two_start_mdp(), seed=4)
        hits = sum(sim.restart().key == 0 for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02
        assert sim.samples == 0


class TestFeatures:
    def test_one_hot(self):
        mdp = chain_mdp([[0.0], [0.0], [0.0]])
        assert np.array_equal(mdp.feature_map(State(1, 2)), [0.0, 1.0, 0.0])
        assert np.array_equal(one_hot_features(3), np.eye(3))

    def test_unknown_state(self):
        mdp = chain_mdp([[0.0], [0.0]])
        with pytest.raises(UnknownState):
            mdp.feature_map(State(5, 1))
        with pytest.raises(UnknownState):
            mdp.feature_map(State(1, 1))  # wrong layer

    def test_norm_bound_enforced_at_construction(self):
        with pytest.raises(InvalidConfig):
            TabularMDP([1], 1, [], [[0.0]], [[False]], [[1.5]], [1.0])

    def test_reward_out_of_range_rejected(self):
        with pytest.raises(InvalidConfig):
            chain_mdp([[1.2]])


def test_clone_forks_stream():
    mdp = chain_mdp([[0.5], [0.5]], bernoulli=True)
    a, b = Simulator(mdp, seed=11), Simulator(mdp, seed=11)
    ca, cb = a.clone(), b.clone()
    ra = ca.step_repeated(0, 200)[0]
    assert np.array_equal(ra, cb.step_repeated(0, 200)[0])
    assert not np.array_equal(ra, a.step_repeated(0, 200)[0])
    assert ca.current == a.current


def test_json_round_trip(tmp_path):
    mdp, _ = random_tabular(5, (1, 2, 3), 2)
    path = tmp_path / "m.json"
    mdp.save(path)
    back = TabularMDP.load(path)
    assert back.to_dict() == mdp.to_dict()
    for s in mdp.states():
        for a in range(2):
            assert back.transitions(s, a) == mdp.transitions(s, a)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), layers=st.lists(st.integers(1, 4), min_size=1, max_size=4),
       A=st.integers(1, 3))
def test_features_bounded_and_terminal_zero(seed, layers, A):
    mdp, _ = random_tabular(seed, layers, A)
    for s in reachable_states(mdp):
        assert np.linalg.norm(mdp.feature_map(s)) <= 1 + 1e-9
    assert not np.any(mdp.feature_map(mdp.terminal))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), ops=st.lists(st.sampled_from(["step", "reset", "restart", "batch"]),
                                                   max_size=30))
def test_sample_counter_counts_steps(seed, ops):
    mdp, _ = random_tabular(seed, (2, 2, 2), 2)
    sim = Simulator(mdp, seed)
    expected = 0
    for op in ops:
        if op == "step" and not sim.current.terminal:
            sim.step(0)
            expected += 1
        elif op == "batch" and not sim.current.terminal:
            sim.step_repeated(1, 3)
            expected += 3
        elif op == "reset" and sim.checkpoint is not None:
            sim.reset_to_checkpoint()
        elif op == "restart":
            sim.restart()
    assert sim.samples == expected
