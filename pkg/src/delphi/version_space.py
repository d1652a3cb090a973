"""Admissible parameter sets (ball intersected with slabs) and the optimistic program.

A slab constraint ``(x, tau)`` admits ``theta`` when
``|x[0] + <x[1:], theta>| <= tau``. The optimistic program maximizes a
linear objective over the ball of radius ``B`` intersected with all slabs.
It is solved by a primal log-barrier method with damped Newton steps; a
phase-one problem supplies a strictly feasible start or certifies emptiness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyVersionSpace,
    InvalidArgument,
    IterationOverflow,
    SolverStall,
)

MEMBER_SLACK = 1e-9
FEASIBILITY_TOL = 1e-6
EMPTY_TOL = 1e-4
MAX_NEWTON = 10_000


@dataclass(frozen=True)
class Constraint:
    values: np.ndarray
    tau: float
    origin: str = ""
    iteration: int = 0

    def residual(self, theta) -> float:
        return float(self.values[0] + np.dot(self.values[1:], theta))

    def to_dict(self) -> dict:
        return {"values": [float(v) for v in self.values], "tau": float(self.tau),
                "origin": self.origin, "iteration": int(self.iteration)}


@dataclass(frozen=True)
class OptimisticSolution:
    theta: np.ndarray
    value: float
    residual: float
    iterations: int


@dataclass(frozen=True)
class VersionSpace:
    """Immutable snapshot; :meth:`add_constraint` returns a new space."""

    B: float
    dim: int
    constraints: tuple = field(default_factory=tuple)
    max_constraints: int | None = None

    def __post_init__(self):
        if self.B <= 0:
            raise InvalidArgument("radius B must be positive")
        if self.dim < 1:
            raise InvalidArgument("dimension must be positive")

    def add_constraint(self, values, tau: float, origin: str = "", iteration: int = 0):
        if not tau > 0:
            raise InvalidArgument("threshold tau must be positive")
        values = np.asarray(getattr(values, "values", values), dtype=float)
        if values.shape != (self.dim + 1,):
            raise DimensionError(f"TD vector of shape {values.shape}, expected ({self.dim + 1},)")
        if self.max_constraints is not None and len(self.constraints) >= self.max_constraints:
            raise IterationOverflow(
                f"more than {self.max_constraints} constraints; the driver overran its iteration bound")
        c = Constraint(values.copy(), float(tau), str(origin), int(iteration))
        return VersionSpace(self.B, self.dim, self.constraints + (c,), self.max_constraints)

    def violations(self, theta) -> dict:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionError(f"theta of shape {theta.shape}, expected ({self.dim},)")
        slabs = [max(0.0, abs(c.residual(theta)) - c.tau) for c in self.constraints]
        return {"ball": max(0.0, float(np.linalg.norm(theta)) - self.B), "slabs": slabs}

    def max_violation(self, theta) -> float:
        v = self.violations(theta)
        return max([v["ball"]] + v["slabs"])

    def contains(self, theta, slack: float = MEMBER_SLACK):
        """``(inside, worst violation)`` with closed-set semantics up to ``slack``."""
        worst = self.max_violation(theta)
        return worst <= slack, worst

    def halfspaces(self):
        """Constraints as ``G theta <= h`` (two rows per slab)."""
        if not self.constraints:
            return np.zeros((0, self.dim)), np.zeros(0)
        X = np.array([c.values for c in self.constraints])
        tau = np.array([c.tau for c in self.constraints])
        G = np.vstack([X[:, 1:], -X[:, 1:]])
        h = np.concatenate([tau - X[:, 0], tau + X[:, 0]])
        return G, h

    def to_list(self) -> list:
        return [c.to_dict() for c in self.constraints]


# -- barrier machinery ------------------------------------------------------

def _normalize(G, h):
    """Scale rows to unit norm; rows with zero normal are checked and dropped."""
    norms = np.linalg.norm(G, axis=1)
    zero = norms < 1e-14
    worst = float(np.max(-h[zero], initial=0.0))
    keep = ~zero
    return G[keep] / norms[keep, None], h[keep] / norms[keep], worst


def _max_step(A, b, x, dx, B2, frac=0.99):
    step = 1.0
    slack = b - A @ x
    rate = A @ dx
    pos = rate > 0
    if np.any(pos):
        step = min(step, float(np.min(slack[pos] / rate[pos])))
    # ball: |x + t dx|^2 <= B2
    qa, qb, qc = dx @ dx, 2 * x @ dx, x @ x - B2
    if qa > 0:
        disc = qb * qb - 4 * qa * qc
        root = (-qb + np.sqrt(max(disc, 0.0))) / (2 * qa)
        step = min(step, root)
    return frac * step


def _phase_one(A, b, B, max_newton):
    """Minimize ``s`` subject to ``A x - b <= s`` and ``(|x|^2 - B^2) / (2B) <= s``."""
    d = A.shape[1]
    x = np.zeros(d)
    s = max(float(np.max(-b, initial=0.0)), 0.0) + 1.0
    t = 1.0
    used = 0

    def phi(x, s, t):
        r1 = s - (A @ x - b)
        r2 = s - (x @ x - B * B) / (2 * B)
        if np.any(r1 <= 0) or r2 <= 0:
            return np.inf
        return t * s - np.log(r1).sum() - np.log(r2)

    m = len(b) + 1
    while True:
        for _ in range(100):
            r1 = s - (A @ x - b)
            r2 = s - (x @ x - B * B) / (2 * B)
            w1 = 1 / r1
            gx = A.T @ w1 + x / (B * r2)
            gs = t - w1.sum() - 1 / r2
            Hxx = (A.T * w1**2) @ A + np.outer(x, x) / (B * r2) ** 2 + np.eye(d) / (B * r2)
            Hxs = -(A.T @ w1**2) - x / (B * r2**2)
            Hss = (w1**2).sum() + 1 / r2**2
            H = np.block([[Hxx, Hxs[:, None]], [Hxs[None, :], np.array([[Hss]])]])
            g = np.concatenate([gx, [gs]])
            dz = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = -g @ dz
            used += 1
            if dec / 2 < 1e-9 or used > max_newton:
                break
            step, f0 = 1.0, phi(x, s, t)
            while phi(x + step * dz[:d], s + step * dz[d], t) > f0 + 0.25 * step * (g @ dz):
                step *= 0.5
                if step < 1e-12:
                    break
            if step < 1e-12:
                break
            x, s = x + step * dz[:d], s + step * dz[d]
        gap = m / t
        if s < 0 and gap < 0.1 * abs(s):
            return x, s, used
        if s - gap > EMPTY_TOL or gap < 1e-13 or used > max_newton:
            return x, s, used
        t *= 10


def _phase_two(c, w, z, A, b, B, x0, tol, max_newton):
    """Minimize ``-c.x + w/2 |x - z|^2`` with a log barrier from the strictly feasible ``x0``."""
    d = len(x0)
    B2 = B * B
    x = x0.copy()
    m = len(b) + 1
    scale = max(float(np.linalg.norm(c)) * B, w * B2, 1e-12)
    t = m / scale
    used = 0

    def phi(x, t):
        sl = b - A @ x
        q = B2 - x @ x
        if np.any(sl <= 0) or q <= 0:
            return np.inf
        return t * (-c @ x + 0.5 * w * (x - z) @ (x - z)) - np.log(sl).sum() - np.log(q)

    while True:
        for _ in range(50):
            sl = b - A @ x
            q = B2 - x @ x
            g = t * (-c + w * (x - z)) + A.T @ (1 / sl) + 2 * x / q
            H = t * w * np.eye(d) + (A.T * (1 / sl**2)) @ A + 2 * np.eye(d) / q \
                + 4 * np.outer(x, x) / q**2
            dx = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = -g @ dx
            used += 1
            if dec / 2 < 1e-9 or used > max_newton:
                break
            step = _max_step(A, b, x, dx, B2)
            f0 = phi(x, t)
            while phi(x + step * dx, t) > f0 + 0.25 * step * (g @ dx):
                step *= 0.5
                if step < 1e-12:
                    break
            if step < 1e-12:
                break
            x = x + step * dx
        if m / t < tol * scale or used > max_newton:
            return x, used, m / t
        t *= 20


def _solve(space: VersionSpace, c, w=0.0, z=None, tol=1e-10, max_newton=MAX_NEWTON):
    d = space.dim
    c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
    if c.shape != (d,):
        raise DimensionError(f"objective of shape {c.shape}, expected ({d},)")
    z = np.zeros(d) if z is None else np.asarray(z, dtype=float)
    G, h = space.halfspaces()
    A, b, degenerate = _normalize(G, h)
    if degenerate > EMPTY_TOL:
        raise EmptyVersionSpace(f"a constraint with zero feature part is violated by {degenerate:.3g}",
                                violation=degenerate)
    x0, s, used1 = _phase_one(A, b, space.B, max_newton)
    if s > EMPTY_TOL:
        raise EmptyVersionSpace(f"no parameter within {s:.3g} of all constraints",
                                violation=float(s), point=x0)
    relax = 0.0
    if s >= 0:
        # touching or nearly empty: widen every constraint just enough for an interior
        relax = s + 1e-12
        b = b + relax
        x0, s, more = _phase_one(A, b, space.B + relax, max_newton)
        used1 += more
    x, used2, gap = _phase_two(c, w, z, A, b, space.B + relax, x0, tol, max_newton - used1)
    iters = used1 + used2
    viol = space.max_violation(x)
    if viol > FEASIBILITY_TOL or iters > max_newton:
        raise SolverStall(f"solver stopped after {iters} Newton steps with violation {viol:.3g}",
                          best=x)
    return x, iters, viol


def optimistic_argmax(space: VersionSpace, c) -> OptimisticSolution:
    """Maximize ``<c, theta>`` over the space.

    A zero objective returns the minimum-norm member.
    """
    c = np.asarray(c, dtype=float)
    if not np.any(c):
        x, iters, viol = _solve(space, c, w=1.0)
    else:
        x, iters, viol = _solve(space, c)
    return OptimisticSolution(x, float(c @ x), float(viol), int(iters))


def project(space: VersionSpace, z) -> np.ndarray:
    """Euclidean projection of ``z`` onto the space."""
    x, _, _ = _solve(space, None, w=1.0, z=np.asarray(z, dtype=float))
    return x


def dykstra_project(space: VersionSpace, z, tol=1e-12, max_iter=100_000):
    """Euclidean projection by cyclic Dykstra sweeps over the ball and each slab.

    Returns ``(point, sweeps)``. Independent of the barrier solver.
    """
    z = np.asarray(z, dtype=float)
    cons = space.constraints
    x = z.copy()
    inc = np.zeros((len(cons) + 1, len(z)))
    for it in range(1, max_iter + 1):
        prev, prev_inc = x.copy(), inc.copy()
        y = x + inc[0]
        n = np.linalg.norm(y)
        x = y if n <= space.B else y * (space.B / n)
        inc[0] = y - x
        for i, con in enumerate(cons, start=1):
            y = x + inc[i]
            g, r = con.values[1:], con.residual(y)
            gg = g @ g
            if gg > 0 and abs(r) > con.tau:
                x = y - g * (r - np.sign(r) * con.tau) / gg
            else:
                x = y
            inc[i] = y - x
        # the point can sit still while the increments drift; wait for both
        if np.linalg.norm(x - prev) < tol and np.abs(inc - prev_inc).max() < tol:
            return x, it
    return x, max_iter
