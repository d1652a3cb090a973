import numpy as np
import pytest

from delphi.environments import TabularMDP

ACCEPTANCE_LINES: list = []


def chain_mdp(rewards, bernoulli=False, A=1):
    """Deterministic chain with one state per layer; ``rewards[h][a]``."""
    rewards = np.asarray(rewards, dtype=float).reshape(len(rewards), A)
    H = len(rewards)
    P = [np.ones((1, A, 1)) for _ in range(H - 1)]
    return TabularMDP([1] * H, A, P, rewards, np.full((H, A), bernoulli), np.eye(H), [1.0])


def small_mdp():
    """Three-state instance: s0 -> (s1 | s2) deterministically, two actions.

    Rewards: s0: (0.2, 0.5); s1: (1.0, 0.0); s2: (0.3, 0.4).
    Action 0 at s0 goes to s1, action 1 to s2.
    """
    P = [np.array([[[1.0, 0.0], [0.0, 1.0]]])]
    r = np.array([[0.2, 0.5], [1.0, 0.0], [0.3, 0.4]])
    return TabularMDP([1, 2], 2, P, r, np.zeros((3, 2), bool), np.eye(3), [1.0])


@pytest.fixture
def three_state():
    return small_mdp()


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
