"""Robust forward problem over a cone uncertainty set.

Minimization instances solve

    min_x max_{theta in C} theta @ x

by scenario generation: the master LP minimizes ``Omega`` subject to
``Omega >= theta_j @ x`` for the scenarios found so far, over the LP
description of the feasible region; the worst case for the master's ``x``
comes from the closed-form cap support and is appended as a new scenario
until it exceeds ``Omega`` by at most ``tol``.  The scenario set starts at
``{theta_bar}`` so the first master is bounded.

Maximization (knapsack) instances solve ``max_x min_theta theta @ x`` the
same way, with the master evaluated exactly over all budget-feasible
subsets and the worst case ``-support(-x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConeUncertaintySet, ForwardInstance, ProblemKind, Sense
from .errors import IterationLimitError
from .forward import knapsack_candidates
from .kernel import spherical_cap_support
from .simplex import CuttingPlaneLP

RFO_TOL = 1e-6
DEDUP_ANGLE = 1e-8


@dataclass
class RobustSolution:
    """Robust decision with its certified worst-case objective."""

    x: np.ndarray
    worst_case_value: float
    active_thetas: list = field(default_factory=list)
    iterations: int = 0
    master_values: list = field(default_factory=list)


def worst_case_value(x, cone: ConeUncertaintySet, sense: Sense) -> tuple[float, np.ndarray]:
    """Worst objective of ``x`` over the cone and the scenario attaining it."""
    if sense is Sense.MINIMIZE:
        return spherical_cap_support(x, cone)
    v, theta = spherical_cap_support(-np.asarray(x, dtype=float), cone)
    return -v, theta


def _is_new(theta, scenarios):
    for t in scenarios:
        if np.arccos(np.clip(t @ theta, -1.0, 1.0)) < DEDUP_ANGLE:
            return False
    return True


def _polytope_master(inst: ForwardInstance):
    """Cutting-plane LP over ``z = (x, Omega)`` for the feasible region of ``inst``."""
    d = inst.dim
    c = np.zeros(d + 1)
    c[-1] = 1.0
    lo = np.full(d + 1, -np.inf)
    up = np.full(d + 1, np.inf)
    if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
        net = inst.exo.network
        lo[:d], up[:d] = 0.0, 1.0
        E = np.hstack([net.incidence, np.zeros((net.n_nodes, 1))])
        return CuttingPlaneLP(c, lo, up, E=E, e=inst.exo.supply())
    u = float(inst.exo.u)
    lo[:2] = 0.0
    up[:2] = [u, 2.0]
    return CuttingPlaneLP(c, lo, up, G=[[1.0, u, 0.0]], h=[u])


def solve_rfo(cone: ConeUncertaintySet, inst: ForwardInstance, max_iter: int = 200,
              tol: float = RFO_TOL) -> RobustSolution:
    """Solve the robust forward problem by scenario generation.

    Parameters
    ----------
    cone : ConeUncertaintySet
    inst : ForwardInstance
    max_iter : int
        Cap on master solves; exceeding it raises
        :class:`~conformal_io.errors.IterationLimitError` carrying the best
        solution found.
    tol : float
        Certification tolerance on worst case versus master value.
    """
    if cone.dim != inst.dim:
        raise ValueError("cone and instance dimensions differ")
    if inst.sense is Sense.MAXIMIZE:
        return _solve_max(cone, inst, max_iter, tol)
    master = _polytope_master(inst)
    d = inst.dim
    scenarios = [cone.center.copy()]
    master.add_rows(np.append(-cone.center, 1.0), [0.0])
    values = []
    best = None
    for it in range(1, max_iter + 1):
        sol = master.solve()
        x, omega = sol.x[:d].copy(), float(sol.x[d])
        values.append(omega)
        worst, theta = worst_case_value(x, cone, inst.sense)
        if best is None or worst < best.worst_case_value:
            best = RobustSolution(_clean(x), worst, list(scenarios), it, list(values))
        if worst - omega <= tol * max(1.0, abs(omega)) or not _is_new(theta, scenarios):
            return RobustSolution(_clean(x), worst, scenarios, it, values)
        scenarios.append(theta)
        master.add_rows(np.append(-theta, 1.0), [0.0])
    raise IterationLimitError(f"robust master did not converge in {max_iter} iterations", best)


def _clean(x):
    """Snap entries within 1e-9 of 0 or 1 (vertex solutions of flow LPs)."""
    x = x.copy()
    for target in (0.0, 1.0):
        x[np.abs(x - target) <= 1e-9] = target
    return x


def _solve_max(cone, inst, max_iter, tol):
    X = knapsack_candidates(inst.exo)
    running = X @ cone.center
    scenarios = [cone.center.copy()]
    values = []
    best = None
    for it in range(1, max_iter + 1):
        k = int(np.argmax(running))
        omega = float(running[k])
        values.append(omega)
        x = X[k]
        worst, theta = worst_case_value(x, cone, inst.sense)
        if best is None or worst > best.worst_case_value:
            best = RobustSolution(x.copy(), worst, list(scenarios), it, list(values))
        if omega - worst <= tol * max(1.0, abs(omega)) or not _is_new(theta, scenarios):
            return RobustSolution(x.copy(), worst, scenarios, it, values)
        scenarios.append(theta)
        np.minimum(running, X @ theta, out=running)
    raise IterationLimitError(f"robust master did not converge in {max_iter} iterations", best)


def sample_path_from_flow(x, inst: ForwardInstance, rng) -> np.ndarray:
    """Decompose a fractional o-d flow into paths and draw one by its weight."""
    exo = inst.exo
    net = exo.network
    tails = np.asarray(net.tails)
    heads = np.asarray(net.heads)
    flow = np.asarray(x, dtype=float).copy()
    paths, weights = [], []
    for _ in range(net.n_arcs + 1):
        if flow.max() <= 1e-9:
            break
        # Follow positive arcs from the origin; a revisited node closes a cycle.
        pos = {exo.origin: 0}
        walk = []
        v = exo.origin
        while v != exo.destination:
            arcs = [a for a in np.flatnonzero(flow > 1e-9) if tails[a] == v]
            if not arcs:
                break
            a = arcs[0]
            walk.append(a)
            v = heads[a]
            if v in pos:  # strip the cycle and keep walking
                cyc = walk[pos[v]:]
                flow[cyc] -= flow[cyc].min()
                walk = walk[:pos[v]]
                pos = {k2: i for k2, i in pos.items() if i <= pos[v]}
            else:
                pos[v] = len(walk)
        if v != exo.destination or not walk:
            break
        amount = flow[walk].min()
        flow[walk] -= amount
        p = np.zeros(net.n_arcs)
        p[walk] = 1.0
        paths.append(p)
        weights.append(amount)
    if not paths:
        raise ValueError("flow carries no origin-destination path")
    w = np.asarray(weights)
    return paths[rng.choice(len(paths), p=w / w.sum())]
