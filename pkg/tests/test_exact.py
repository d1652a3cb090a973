import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delphi.algorithm import exact_measurement_params, run_delphi
from delphi.environments import HypercubeMDP, TabularMDP, hamming, random_tabular
from delphi.errors import DimensionError, InvalidArgument, Unsupported
from delphi.exact import (
    bellman_residual,
    check_delphi_eluder,
    eluder_bound,
    exact_optimal,
    exact_value,
    linear_value_param,
    verify_eluder_sequence,
)
from delphi.expert import make_tabular_expert
from delphi.mdp import Environment, FeatureMap, Simulator, State, reachable_states
from delphi.version_space import Constraint

from conftest import chain_mdp


class TestExactValue:
    def test_zero_reward(self):
        mdp, expert = random_tabular(2, (1, 2, 2), 2)
        mdp.r_mean[:] = 0.0
        vo = exact_value(mdp, expert)
        assert all(v == 0.0 for v in vo.v.values())

    def test_unit_chain(self):
        assert exact_value(chain_mdp([[1.0]] * 3), lambda s: 0).start_value() == 3.0

    def test_policy_forms_agree(self):
        mdp, expert = random_tabular(3, (1, 2, 3), 2)
        by_array = exact_value(mdp, expert).v
        by_map = exact_value(mdp, {s: int(expert[s.key]) for s in mdp.states()}).v
        by_fn = exact_value(mdp, lambda s: expert[s.key]).v
        assert by_array == by_map == by_fn

    def test_stochastic_start(self):
        mdp, expert = random_tabular(5, (3, 2), 2)
        mdp2 = TabularMDP.from_dict({**mdp.to_dict(), "start": [0.2, 0.3, 0.5]})
        vo = exact_value(mdp2, expert)
        assert vo.start_value() == pytest.approx(
            0.2 * vo.v[mdp2.state(0)] + 0.3 * vo.v[mdp2.state(1)] + 0.5 * vo.v[mdp2.state(2)])

    def test_sample_only_model(self):
        class Opaque(Environment):
            horizon, num_actions = 1, 1
            feature_map = FeatureMap(1, lambda s: np.ones(1))

            def sample_start(self, rng):
                return State(0, 1)

        with pytest.raises(Unsupported):
            exact_value(Opaque(), lambda s: 0)

    def test_linear_param_recovers_values(self):
        mdp, expert = random_tabular(8, (1, 2, 3), 2)
        vo = exact_value(mdp, expert)
        theta = linear_value_param(mdp, vo)
        for s in mdp.states():
            assert mdp.feature_map(s) @ theta == pytest.approx(vo.v[s], abs=1e-12)


class TestExactOptimal:
    def test_single_action(self):
        mdp = chain_mdp([[0.4], [0.6]])
        pi, vstar = exact_optimal(mdp)
        assert set(pi.values()) == {0}
        assert vstar.start_value() == pytest.approx(1.0)

    def test_bandit(self):
        pi, vstar = exact_optimal(chain_mdp([[0.2, 0.8]], A=2))
        assert pi[State(0, 1)] == 1 and vstar.start_value() == pytest.approx(0.8)

    def test_ties_lowest_index(self):
        pi, _ = exact_optimal(chain_mdp([[0.5, 0.5]], A=2))
        assert pi[State(0, 1)] == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_dominates_every_policy(self, seed):
        mdp, _ = random_tabular(seed, (1, 2, 1), 2)
        states = mdp.states()
        _, vstar = exact_optimal(mdp)
        for acts in itertools.product(range(2), repeat=len(states)):
            vp = exact_value(mdp, np.array(acts))
            assert all(vstar.v[s] >= vp.v[s] - 1e-12 for s in states)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), layers=st.lists(st.integers(1, 4), min_size=1, max_size=4),
       A=st.integers(1, 3))
def test_bellman_residual_vanishes(seed, layers, A):
    mdp, expert = random_tabular(seed, layers, A)
    assert bellman_residual(mdp, expert, exact_value(mdp, expert)) <= 1e-12
    pi, vstar = exact_optimal(mdp)
    assert bellman_residual(mdp, pi, vstar) <= 1e-12


class TestHypercube:
    GOALS = [g for g in itertools.product([-1, 1], repeat=4)
             if 1 <= hamming(np.ones(4), np.array(g)) <= 3]

    def test_expert_values_linear(self):
        env = HypercubeMDP(4, 2, [1, -1, 1, -1])
        vo = exact_value(env, env.expert_policy)
        theta = env.value_param()
        for s in reachable_states(env):
            if not s.terminal:
                assert env.feature_map(s) @ theta == pytest.approx(vo[s], abs=1e-9)

    @pytest.mark.parametrize("goal", [g for g in GOALS if hamming(np.ones(4), np.array(g)) == 1])
    def test_optimal_equals_expert_one_bit_goals(self, goal):
        env = HypercubeMDP(4, 2, goal)
        _, vstar = exact_optimal(env)
        assert vstar.start_value() == pytest.approx(
            exact_value(env, env.expert_policy).start_value(), abs=1e-12)

    @pytest.mark.parametrize("goal", GOALS)
    def test_expert_never_beats_optimal(self, goal):
        env = HypercubeMDP(4, 2, goal)
        _, vstar = exact_optimal(env)
        assert vstar.start_value() >= exact_value(env, env.expert_policy).start_value() - 1e-12


class TestEluderSequence:
    def test_empty(self):
        assert verify_eluder_sequence([], [], np.zeros(3), 0.1) == (True, None)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_orthonormal_construction(self, d):
        eps = 0.1
        points = [np.concatenate([[0.0], e]) for e in np.eye(d)]
        params = [2 * eps * e for e in np.eye(d)]
        assert verify_eluder_sequence(points, params, np.zeros(d), eps) == (True, None)

    def test_first_condition_fails(self):
        x = np.array([0.0, 1.0])
        assert verify_eluder_sequence([x], [np.array([0.05])], np.zeros(1), 0.1) == (False, 0)

    def test_history_condition_fails(self):
        x = np.array([0.0, 1.0])
        ok, idx = verify_eluder_sequence([x, x], [np.array([0.2]), np.array([0.2])], np.zeros(1), 0.1)
        assert (ok, idx) == (False, 1)

    def test_dimension_errors(self):
        with pytest.raises(DimensionError):
            verify_eluder_sequence([np.zeros(3)], [], np.zeros(2), 0.1)
        with pytest.raises(DimensionError):
            verify_eluder_sequence([np.zeros(2)], [np.zeros(2)], np.zeros(2), 0.1)

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_random_search_never_passes_bound(self, d):
        rng = np.random.default_rng(d)
        B, eps = 1.0, 0.5
        bound = eluder_bound(d, B, eps)
        star = rng.normal(size=d)
        star *= B / 2 / np.linalg.norm(star)

        def ball(n, r):
            v = rng.normal(size=(n, d))
            return v * (r * rng.uniform(size=(n, 1)) ** (1 / d) / np.linalg.norm(v, axis=1,
                                                                                  keepdims=True))

        points, params = [], []
        for _ in range(300):
            xs = np.hstack([rng.uniform(-1, 1, size=(64, 1)), ball(64, 1.0)])
            ts = ball(64, B)
            for x, t in zip(xs, ts):
                if verify_eluder_sequence(points + [x], params + [t], star, eps)[0]:
                    points.append(x)
                    params.append(t)
                    break
        assert verify_eluder_sequence(points, params, star, eps)[0]
        assert len(points) <= bound

    @pytest.mark.parametrize("d", [1, 2, 4])
    def test_sequences_longer_than_bound_rejected(self, d):
        rng = np.random.default_rng(10 + d)
        n = math.floor(eluder_bound(d, 1.0, 0.5)) + 1
        star = np.zeros(d)
        for _ in range(20):
            points = [np.concatenate([[0.0], x / max(1.0, np.linalg.norm(x))])
                      for x in rng.normal(size=(n, d))]
            params = [t / max(1.0, np.linalg.norm(t)) for t in rng.normal(size=(n, d))]
            assert not verify_eluder_sequence(points, params, star, 0.5)[0]


class TestDelphiEluder:
    def test_forged_duplicate(self):
        x = np.array([0.3, 1.0, 0.0])
        c1 = Constraint(x, 0.01, "s", 1)
        c2 = Constraint(x, 0.01, "s", 2)
        theta = np.array([0.0, 0.0])
        star = np.array([-0.3, 0.0])
        rec = SimpleNamespace(constraints=(c1,), thetas=[theta, theta])
        assert check_delphi_eluder(rec, star, 0.1) == (True, None)
        rec.constraints = (c1, c2)
        assert check_delphi_eluder(rec, star, 0.1) == (False, 1)

    def test_empty_run(self):
        rec = SimpleNamespace(constraints=(), thetas=[np.zeros(2)])
        assert check_delphi_eluder(rec, np.zeros(2), 0.1) == (True, None)

    def test_missing_dump(self):
        with pytest.raises(InvalidArgument):
            check_delphi_eluder(None, np.zeros(2), 0.1)
        with pytest.raises(InvalidArgument):
            check_delphi_eluder(SimpleNamespace(thetas=[]), np.zeros(2), 0.1)

    @pytest.mark.parametrize("seed", range(3))
    def test_recorded_exact_runs_pass(self, seed):
        mdp, expert = random_tabular(200 + seed, (1, 2, 2, 3), 3, deterministic=True, gap=0.1)
        vo = exact_value(mdp, expert)
        theta = np.array([vo.v[s] for s in mdp.states()])
        hp = exact_measurement_params(len(theta), 4, 3, math.ceil(np.linalg.norm(theta)))
        _, _, stats = run_delphi(Simulator(mdp, seed), make_tabular_expert(mdp, "provided", expert),
                                 None, hp, exact_measurement=True)
        assert stats.oracle_calls >= 1
        assert check_delphi_eluder(stats, theta, hp.eps_bar) == (True, None)


def test_bound_formula():
    assert eluder_bound(1, 1.0, 2.0) == pytest.approx(3 * math.e / (math.e - 1) * math.log(6) + 1)
