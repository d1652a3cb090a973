"""Bandit-style hypercube game with an optional bit-revealing oracle.

The planner submits sequences of ``+-1`` vectors starting from all ones,
each at Hamming distance at least ``p / 4`` from its predecessor. A round
pays a Bernoulli reward only when it ends close to the hidden goal or has
full length ``K``. Within a round the planner works bit by bit and may ask
the oracle for the first wrong bit of the vector it is building.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .environments.hypercube import admissible, hamming, random_goal, score
from .errors import BudgetExceeded, IllegalSequence, InvalidArgument, LengthExceeded
from .mdp import make_rng

DONE = "done"
FINAL_LENGTH = 8
MODES = ("standard", "zero", "null")


def _vec(w, p=None) -> np.ndarray:
    w = np.asarray(w, dtype=int)
    if w.ndim != 1 or not np.all(np.abs(w) == 1):
        raise InvalidArgument("vectors must be 1-d with entries +-1")
    if p is not None and len(w) != p:
        raise InvalidArgument(f"vector of length {len(w)}, expected {p}")
    return w


def check_sequence(seq, p: int) -> list:
    """Validate the minimum-gap rule; returns the vectors as arrays.

    Raises :class:`IllegalSequence` carrying the 1-based position of the first
    vector closer than ``p / 4`` to its predecessor.
    """
    vecs = [_vec(w, p) for w in seq]
    prev = np.ones(p, dtype=int)
    for i, w in enumerate(vecs, start=1):
        if hamming(prev, w) < p / 4:
            raise IllegalSequence(f"vector {i} is within {p / 4} of its predecessor", i)
        prev = w
    return vecs


def cubegame_reward(seq, goal) -> float:
    """Product of ``g`` over consecutive gaps times ``g`` of the last vector's distance to ``goal``."""
    goal = _vec(goal)
    p = len(goal)
    vecs = check_sequence(seq, p)
    out, prev = 1.0, np.ones(p, dtype=int)
    for w in vecs:
        out *= score(hamming(prev, w), p)
        prev = w
    return out * score(hamming(prev, goal), p)


def first_wrong_bit(w, goal):
    """Index of the first coordinate where ``w`` differs from ``goal``, or :data:`DONE`."""
    diff = np.flatnonzero(np.asarray(w) != np.asarray(goal))
    return DONE if len(diff) == 0 else int(diff[0])


def random_oracle(p: int, rng) -> int:
    return int(rng.integers(p))


def final_cutoff(seq, goal) -> int:
    """1-based position of the first vector within ``p / 4`` of ``goal``, capped at the final length."""
    p = len(goal)
    for k, w in enumerate(seq, start=1):
        if hamming(w, goal) < p / 4:
            return min(k, FINAL_LENGTH)
    return FINAL_LENGTH


@dataclass(frozen=True)
class Observation:
    U: bool
    V: bool
    Z: int


@dataclass
class RoundLog:
    t: int
    input_length: int = 0
    oracle_queries: int = 0
    query_positions: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    answers: list = field(default_factory=list)
    observation: dict | None = None
    cumulative_samples: int = 0


class Round:
    """One mid-game input built bit by bit.

    Every bit flip is one sample. ``end_phase`` closes the vector being
    built and appends it to the sequence; ``query`` asks the oracle about the
    vector being built.
    """

    def __init__(self, game: "CubeGame"):
        self.game = game
        self.p = game.p
        self.vectors: list = []
        self.current = np.ones(self.p, dtype=int)
        self.flips = 0
        self.closed = False
        self.log = RoundLog(t=game.interactions + 1)
        self._segment_start = 0

    @property
    def previous(self) -> np.ndarray:
        return self.vectors[-1] if self.vectors else np.ones(self.p, dtype=int)

    def _open(self):
        if self.closed:
            raise InvalidArgument("round already finished")

    def flip(self, i: int) -> None:
        self._open()
        if not 0 <= i < self.p:
            raise InvalidArgument(f"bit index {i} outside [0, {self.p})")
        if len(self.vectors) >= self.game.K:
            raise LengthExceeded(f"sequence already has length {self.game.K}")
        self.current[i] *= -1
        self.flips += 1
        self.game.samples += 1

    def move_to(self, w) -> None:
        for i in np.flatnonzero(self.current != _vec(w, self.p)):
            self.flip(int(i))

    def end_phase(self) -> None:
        self._open()
        if len(self.vectors) >= self.game.K:
            raise LengthExceeded(f"sequence already has length {self.game.K}")
        if hamming(self.previous, self.current) < self.p / 4:
            raise IllegalSequence(f"vector {len(self.vectors) + 1} is within {self.p / 4} "
                                  "of its predecessor", len(self.vectors) + 1)
        self.vectors.append(self.current.copy())

    def extend(self, seq) -> None:
        for w in seq:
            self.move_to(w)
            self.end_phase()

    def query(self):
        """Oracle answer at the vector being built; charged against the game's budget."""
        self._open()
        ans = self.game.ask(self.current)
        self.log.oracle_queries += 1
        self.log.query_positions.append([len(self.vectors), int(hamming(self.previous, self.current))])
        self.log.segments.append(len(self.vectors) - self._segment_start)
        self.log.answers.append(ans)
        self._segment_start = len(self.vectors)
        return ans

    def finish(self) -> Observation:
        self._open()
        if not self.vectors:
            raise InvalidArgument("a round needs at least one vector")
        if np.any(self.current != self.vectors[-1]):
            raise InvalidArgument("unfinished phase: call end_phase before finish")
        self.closed = True
        self.log.segments.append(len(self.vectors) - self._segment_start)
        return self.game._observe(self)


class CubeGame:
    """Game instance.

    ``mode="standard"`` pays rewards and answers queries with the true
    oracle; ``"zero"`` never pays but keeps the true oracle; ``"null"`` never
    pays and answers with uniformly random bits.
    """

    def __init__(self, p: int, K: int, goal=None, seed=0, mode="standard", budget=None):
        if p < 1 or K < 1:
            raise InvalidArgument("p and K must be positive")
        if mode not in MODES:
            raise InvalidArgument(f"unknown mode {mode!r}")
        self.p, self.K, self.mode, self.budget = int(p), int(K), mode, budget
        self.rng = make_rng(seed)
        if goal is None:
            goal = random_goal(self.p, self.rng)
        self.goal = _vec(goal, self.p)
        if not admissible(self.goal):
            raise InvalidArgument("goal must lie between p/4 and 3p/4 flips from all ones")
        self.samples = 0
        self.interactions = 0
        self.queries = 0
        self.transcript: list = []
        self.final_reward = None

    def ask(self, w):
        if self.budget is not None and self.queries >= self.budget:
            raise BudgetExceeded(f"oracle budget of {self.budget} calls exhausted")
        self.queries += 1
        if self.mode == "null":
            return random_oracle(self.p, self.rng)
        return first_wrong_bit(w, self.goal)

    def begin(self) -> Round:
        return Round(self)

    def mean_reward(self, seq) -> float:
        return 0.0 if self.mode != "standard" else cubegame_reward(seq, self.goal)

    def _observe(self, rnd: Round) -> Observation:
        seq = rnd.vectors
        close = lambda w: hamming(w, self.goal) < self.p / 4  # noqa: E731
        prev = seq[-2] if len(seq) > 1 else np.ones(self.p, dtype=int)
        U, V = close(prev), close(seq[-1])
        Z = 0
        if V or len(seq) == self.K:
            Z = int(self.rng.random() < self.mean_reward(seq))
        obs = Observation(bool(U), bool(V), Z)
        self.interactions += 1
        rnd.log.input_length = len(seq)
        rnd.log.observation = asdict(obs)
        rnd.log.cumulative_samples = self.samples
        self.transcript.append(asdict(rnd.log))
        return obs

    def play(self, seq) -> Observation:
        """Input a whole sequence in one round (no queries)."""
        vecs = check_sequence(seq, self.p)
        if len(vecs) > self.K:
            raise LengthExceeded(f"length {len(vecs)} exceeds K = {self.K}")
        rnd = self.begin()
        rnd.extend(vecs)
        return rnd.finish()

    def submit(self, seq) -> float:
        """Final answer of exactly eight vectors; returns the deterministic reward."""
        vecs = check_sequence(seq, self.p)
        if len(vecs) != FINAL_LENGTH:
            raise InvalidArgument(f"final answer must have {FINAL_LENGTH} vectors")
        k = final_cutoff(vecs, self.goal)
        self.final_reward = self.mean_reward(vecs[:k])
        self.transcript.append({"t": self.interactions + 1, "input_length": 0, "final_cutoff": k,
                                "final_reward": self.final_reward,
                                "cumulative_samples": self.samples})
        return self.final_reward

    def target_reward(self) -> float:
        """Reward of the one-vector answer that jumps straight to the goal."""
        return cubegame_reward([self.goal], self.goal)

    def write_transcript(self, path) -> None:
        with Path(path).open("w") as fh:
            for row in self.transcript:
                fh.write(json.dumps(row) + "\n")


def cubegame_play(game: CubeGame, seq, final=False):
    """Mid-game input (returns an :class:`Observation`) or final answer (returns the reward)."""
    return game.submit(seq) if final else game.play(seq)


def padded_answer(w, p: int) -> list:
    """``w`` followed by alternating sign flips, a legal eight-vector answer."""
    w = _vec(w, p)
    return [w if k % 2 == 0 else -w for k in range(FINAL_LENGTH)]


def default_answer(p: int) -> list:
    """Answer that commits to nothing: alternating all-minus and all-plus vectors."""
    ones = np.ones(p, dtype=int)
    return [-ones if k % 2 == 0 else ones for k in range(FINAL_LENGTH)]


# -- planners -------------------------------------------------------------

@dataclass
class PlannerResult:
    success: bool
    reward: float
    queries: int
    samples: int
    interactions: int


def _result(game: CubeGame, reward: float) -> PlannerResult:
    return PlannerResult(bool(reward >= game.target_reward() - 0.01), float(reward), game.queries,
                         game.samples, game.interactions)


def greedy_planner(game: CubeGame) -> PlannerResult:
    """Fix the first wrong bit until the oracle reports done, then submit the goal."""
    rnd = game.begin()
    while (ans := rnd.query()) != DONE:
        rnd.flip(ans)
    rnd.end_phase()
    rnd.finish()
    return _result(game, game.submit(padded_answer(rnd.current, game.p)))


def budgeted_planner(game: CubeGame, budget: int, sample_cap: int, seed=0) -> PlannerResult:
    """Spend up to ``budget`` queries fixing bits, then test candidates until ``sample_cap``.

    Each candidate test is a one-vector round from all ones; a round that
    lands close to the goal ends the search. Without a hit the planner
    submits :func:`default_answer`.
    """
    p = game.p
    rnd = game.begin()
    known = 0
    found = None
    for _ in range(budget):
        ans = rnd.query()
        if ans == DONE:
            found = rnd.current.copy()
            break
        rnd.flip(ans)
        known = ans + 1
    prefix = rnd.current[:known].copy()
    if found is None:
        rng = make_rng(seed)
        cands = [w for w in _all_vectors(p) if admissible(w) and np.array_equal(w[:known], prefix)]
        for j in rng.permutation(len(cands)):
            w = cands[j]
            cost = hamming(np.ones(p), w)
            if game.samples + cost > sample_cap:
                break
            if game.play([w]).V:
                found = w
                break
    if found is None:
        return _result(game, game.submit(default_answer(p)))
    return _result(game, game.submit(padded_answer(found, p)))


def _all_vectors(p: int):
    for bits in range(2 ** p):
        yield np.array([1 - 2 * ((bits >> (p - 1 - i)) & 1) for i in range(p)], dtype=int)


def compare_oracle_budgets(p: int, K: int, budgets, seeds, sample_cap: int) -> list:
    """Success rate and mean samples of :func:`budgeted_planner` for each budget."""
    budgets = list(budgets)
    if not budgets:
        raise InvalidArgument("budget grid must be non-empty")
    rows = []
    for b in budgets:
        res = [budgeted_planner(CubeGame(p, K, seed=s), b, sample_cap, seed=s) for s in seeds]
        rows.append({"budget": int(b), "success_rate": float(np.mean([r.success for r in res])),
                     "mean_samples": float(np.mean([r.samples for r in res]))})
    return rows
