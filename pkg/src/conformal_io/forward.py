"""Exact forward solvers and the uniform optimal-solution oracle.

The oracle ``forward_oracle`` draws uniformly from the optimal set:

* shortest path: over optimal origin-destination paths, by weighting each
  tight arc with the number of optimal completions it admits;
* knapsack: over the enumerated list of maximizing subsets;
* the two-variable LP: over the optimal face (a vertex, an edge, or the
  whole polygon when ``theta = 0``).

``solve_forward`` returns a single optimal vertex for any finite ``theta``,
including costs with negative cycles, which occur for intermediate
iterates of the cutting-plane routines.  In that case the binary shortest
path problem is solved as its (totally unimodular) flow LP with
``0 <= x <= 1``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ForwardInstance,
    KnapsackParams,
    PathParams,
    ProblemKind,
    TwoDimParams,
    as_vector,
)
from .errors import (
    DegenerateOptimalSetError,
    NegativeCycleError,
    ProblemTooLargeError,
)
from .simplex import LinearProgram, simplex_solve

REDUCED_COST_TOL = 1e-9
VALUE_TOL = 1e-9
MAX_KNAPSACK_DIM = 25


@dataclass
class OptimalSet:
    """All optimal solutions of one forward problem.

    Exactly one representation is populated:

    ``tight_arcs`` and ``path_counts``
        shortest path: arcs lying on some optimal path, and for every node the
        number of optimal paths from it to the destination (0 off the DAG);
    ``vertices``
        knapsack: one row per maximizing subset; two-variable LP: the optimal
        vertices in cyclic order (two rows mean the edge between them).
    """

    optimal_value: float
    tight_arcs: np.ndarray | None = None
    path_counts: np.ndarray | None = None
    vertices: np.ndarray | None = None
    exo: object = field(default=None, repr=False)

    @property
    def n_optimal(self) -> int:
        if self.path_counts is not None:
            return int(self.path_counts[self.exo.origin])
        return len(self.vertices)


# --------------------------------------------------------------------- paths
def _bellman_ford(theta, tails, heads, n_nodes, source):
    dist = np.full(n_nodes, np.inf)
    dist[source] = 0.0
    for _ in range(n_nodes):
        cand = dist[tails] + theta
        new = dist.copy()
        np.minimum.at(new, heads, cand)
        if np.array_equal(new, dist):
            return dist
        dist = new
    raise NegativeCycleError("negative-cost cycle detected")


@functools.lru_cache(maxsize=64)
def _arc_arrays(network):
    return np.asarray(network.tails, dtype=int), np.asarray(network.heads, dtype=int)


def solve_shortest_path(theta, exo: PathParams) -> OptimalSet:
    """Minimum-cost origin-destination path and the DAG of all optimal paths.

    Label-correcting (Bellman-Ford) search, so negative arc costs are fine
    as long as no negative cycle exists.  Raises
    :class:`~conformal_io.errors.NegativeCycleError` otherwise, and
    :class:`~conformal_io.errors.DegenerateOptimalSetError` when a zero-cost
    cycle lies on an optimal walk (the optimal set is then not a DAG).
    """
    net = exo.network
    theta = as_vector(theta, net.n_arcs, "theta")
    tails, heads = _arc_arrays(net)
    dist = _bellman_ford(theta, tails, heads, net.n_nodes, exo.origin)
    scale = max(1.0, float(np.max(np.abs(theta))))
    reduced = dist[tails] + theta - dist[heads]
    tight = np.flatnonzero(np.isfinite(reduced) & (reduced <= REDUCED_COST_TOL * scale))

    # Keep tight arcs that can still reach the destination.
    reach = np.zeros(net.n_nodes, dtype=bool)
    reach[exo.destination] = True
    changed = True
    while changed:
        grow = reach.copy()
        grow[tails[tight][reach[heads[tight]]]] = True
        changed = not np.array_equal(grow, reach)
        reach = grow
    tight = tight[reach[heads[tight]] & reach[tails[tight]]]

    # Topological order of the tight subgraph (Kahn) and path counts.
    indeg = np.bincount(heads[tight], minlength=net.n_nodes)
    out = [[] for _ in range(net.n_nodes)]
    for a in tight:
        out[tails[a]].append(a)
    order = []
    stack = [v for v in range(net.n_nodes) if reach[v] and indeg[v] == 0]
    indeg = indeg.copy()
    while stack:
        v = stack.pop()
        order.append(v)
        for a in out[v]:
            w = heads[a]
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    if len(order) != int(reach.sum()):
        raise DegenerateOptimalSetError("zero-cost cycle on an optimal walk")
    counts = np.zeros(net.n_nodes)
    counts[exo.destination] = 1.0
    for v in reversed(order):
        if v != exo.destination:
            counts[v] = sum(counts[heads[a]] for a in out[v])
    mask = np.zeros(net.n_arcs, dtype=bool)
    mask[tight] = True
    return OptimalSet(float(dist[exo.destination]), tight_arcs=mask, path_counts=counts, exo=exo)


def _sample_path(opt: OptimalSet, rng) -> np.ndarray:
    exo = opt.exo
    net = exo.network
    tails, heads = _arc_arrays(net)
    out = _tight_out(opt)
    x = np.zeros(net.n_arcs)
    v = exo.origin
    while v != exo.destination:
        arcs = out[v]
        w = opt.path_counts[heads[arcs]]
        a = arcs[rng.choice(len(arcs), p=w / w.sum())] if len(arcs) > 1 else arcs[0]
        x[a] = 1.0
        v = heads[a]
    return x


def _tight_out(opt):
    tails, _ = _arc_arrays(opt.exo.network)
    out = [[] for _ in range(opt.exo.network.n_nodes)]
    for a in np.flatnonzero(opt.tight_arcs):
        out[tails[a]].append(a)
    return [np.array(o, dtype=int) for o in out]


def enumerate_optimal_paths(opt: OptimalSet) -> list[np.ndarray]:
    """List every optimal path as an arc-indicator vector (small graphs only)."""
    exo = opt.exo
    _, heads = _arc_arrays(exo.network)
    out = _tight_out(opt)
    paths = []

    def walk(v, used):
        if v == exo.destination:
            x = np.zeros(exo.network.n_arcs)
            x[used] = 1.0
            paths.append(x)
            return
        for a in out[v]:
            walk(heads[a], used + [a])

    walk(exo.origin, [])
    return paths


def _path_lp(theta, exo: PathParams):
    """Solve the flow LP ``min theta @ x`` s.t. flow balance, ``0 <= x <= 1``.

    Used when ``theta`` has a negative cycle.  Unit-capacity min-cost flow by
    successive shortest paths: every negative arc starts saturated, so all
    residual costs are non-negative, and single units are then pushed from
    surplus to deficit nodes along cheapest residual paths.  The result is an
    integral vertex (a path plus possibly disjoint negative cycles).
    """
    net = exo.network
    tails, heads = _arc_arrays(net)
    x = (theta < 0).astype(float)
    need = exo.supply() - net.incidence @ x  # > 0: node still lacks inflow
    n = net.n_nodes
    while np.any(need > 0.5):
        # Residual arcs: unused arcs forward, used arcs backward.
        fwd = x < 0.5
        r_tail = np.where(fwd, tails, heads)
        r_head = np.where(fwd, heads, tails)
        r_cost = np.where(fwd, theta, -theta)
        dist = np.where(need < -0.5, 0.0, np.inf)
        pred = np.full(n, -1)
        for _ in range(n + 1):
            cand = dist[r_tail] + r_cost
            better = cand < dist[r_head] - 1e-12
            if not better.any():
                break
            # Apply the best candidate per head node.
            order = np.argsort(cand)
            for a in order[better[order]]:
                h = r_head[a]
                if cand[a] < dist[h] - 1e-12:
                    dist[h] = dist[r_tail[a]] + r_cost[a]
                    pred[h] = a
        else:
            raise NegativeCycleError("residual graph has a negative cycle")
        targets = np.flatnonzero(need > 0.5)
        v = int(targets[np.argmin(dist[targets])])
        if not np.isfinite(dist[v]):
            raise NegativeCycleError("flow problem is infeasible")
        while pred[v] >= 0:
            a = pred[v]
            x[a] = 1.0 - x[a]
            v = r_tail[a]
        need = exo.supply() - net.incidence @ x
    return float(theta @ x), x


def _path_lp_simplex(theta, exo: PathParams):
    """Reference solve of the same flow LP with the generic simplex (tests only)."""
    net = exo.network
    lp = LinearProgram(
        c=theta,
        A=net.incidence,
        senses=["="] * net.n_nodes,
        b=exo.supply(),
        lo=np.zeros(net.n_arcs),
        up=np.ones(net.n_arcs),
    )
    sol = simplex_solve(lp)
    return sol.objective, sol.x


# ------------------------------------------------------------------ knapsack
@functools.lru_cache(maxsize=8)
def _subset_matrix(d: int) -> np.ndarray:
    idx = np.arange(2 ** d, dtype=np.int64)
    return ((idx[:, None] >> np.arange(d)) & 1).astype(float)


@functools.lru_cache(maxsize=4096)
def _feasible_subsets(weights: tuple, budget: float) -> np.ndarray:
    d = len(weights)
    if d > MAX_KNAPSACK_DIM:
        raise ProblemTooLargeError(f"knapsack enumeration supports d <= {MAX_KNAPSACK_DIM}, got {d}")
    w = np.asarray(weights)
    tol = 1e-9 * max(1.0, budget)
    if d <= 20:
        X = _subset_matrix(d)
        return X[X @ w <= budget + tol]
    # Enumerate in blocks to bound memory for 21..25 items.
    low = _subset_matrix(16)
    high = _subset_matrix(d - 16)
    blocks = []
    wl, wh = low @ w[:16], high @ w[16:]
    for j in range(high.shape[0]):
        keep = wl + wh[j] <= budget + tol
        if keep.any():
            blocks.append(np.hstack([low[keep], np.repeat(high[j:j + 1], keep.sum(), axis=0)]))
    return np.vstack(blocks)


def knapsack_candidates(exo: KnapsackParams) -> np.ndarray:
    """All budget-feasible 0/1 item vectors, one per row."""
    return _feasible_subsets(exo.weights, float(exo.effective_budget))


def solve_knapsack(theta, exo: KnapsackParams) -> OptimalSet:
    """All maximizing subsets by exhaustive enumeration (``d <= 25``)."""
    theta = as_vector(theta, len(exo.weights), "theta")
    X = knapsack_candidates(exo)
    vals = X @ theta
    best = float(vals.max())
    tol = VALUE_TOL * max(1.0, abs(best))
    return OptimalSet(best, vertices=X[vals >= best - tol], exo=exo)


# ----------------------------------------------------------- two-variable LP
def solve_two_dim(theta, exo: TwoDimParams) -> OptimalSet:
    """Optimal vertices of the two-variable LP, in cyclic order."""
    theta = as_vector(theta, 2, "theta")
    V = exo.vertices()
    vals = V @ theta
    best = float(vals.min())
    tol = VALUE_TOL * max(1.0, abs(best))
    on = vals <= best + tol
    if on.sum() == 2 and on[0] and on[3]:
        V = V[[3, 0]]  # the edge x1 = 0 closes the cycle
    else:
        V = V[on]
    return OptimalSet(best, vertices=V, exo=exo)


def _sample_two_dim(opt: OptimalSet, rng) -> np.ndarray:
    V = opt.vertices
    if len(V) == 1:
        return V[0].copy()
    if len(V) == 2:
        # Uniform arclength parameter along the optimal edge.
        length = float(np.linalg.norm(V[1] - V[0]))
        t = rng.uniform(0.0, length)
        return V[0] + (V[1] - V[0]) * (t / length)
    u = opt.exo.u
    while True:  # theta = 0: every feasible point is optimal
        x = np.array([rng.uniform(0, u), rng.uniform(0, 2)])
        if x[0] + u * x[1] >= u:
            return x


# -------------------------------------------------------------------- public
def optimal_set(theta, inst: ForwardInstance) -> OptimalSet:
    if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
        return solve_shortest_path(theta, inst.exo)
    if inst.kind is ProblemKind.KNAPSACK:
        return solve_knapsack(theta, inst.exo)
    return solve_two_dim(theta, inst.exo)


def forward_oracle(theta, inst: ForwardInstance, rng) -> np.ndarray:
    """Draw a decision uniformly from the optimal set of FO(theta, u).

    For shortest path costs with a negative or zero-cost cycle on an optimal
    walk the optimal set has no path DAG; a single optimal vertex from the
    flow LP is returned instead.
    """
    if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
        try:
            opt = solve_shortest_path(theta, inst.exo)
        except (NegativeCycleError, DegenerateOptimalSetError):
            return _path_lp(as_vector(theta, inst.dim, "theta"), inst.exo)[1]
        return _sample_path(opt, rng)
    opt = optimal_set(theta, inst)
    if inst.kind is ProblemKind.KNAPSACK:
        V = opt.vertices
        return V[rng.integers(len(V))].copy() if len(V) > 1 else V[0].copy()
    return _sample_two_dim(opt, rng)


def solve_forward(theta, inst: ForwardInstance) -> tuple[float, np.ndarray]:
    """Optimal value and one optimal vertex of FO(theta, u), for any finite theta."""
    theta = as_vector(theta, inst.dim, "theta")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
        exo = inst.exo
        net = exo.network
        tails, heads = _arc_arrays(net)
        try:
            dist = _bellman_ford(theta, tails, heads, net.n_nodes, exo.origin)
        except NegativeCycleError:
            return _path_lp(theta, exo)
        return float(dist[exo.destination]), _tree_path(theta, dist, exo)
    opt = optimal_set(theta, inst)
    return opt.optimal_value, opt.vertices[0].copy()


def _tree_path(theta, dist, exo):
    """Walk back from the destination along arcs with zero reduced cost.

    Arcs are chosen so that distances strictly decrease in hop count from
    the origin, which avoids zero-cost cycles.
    """
    net = exo.network
    tails, heads = _arc_arrays(net)
    scale = max(1.0, float(np.max(np.abs(theta))))
    reduced = dist[tails] + theta - dist[heads]
    tight = np.isfinite(reduced) & (reduced <= REDUCED_COST_TOL * scale)
    # Breadth-first search from the origin over tight arcs gives a hop-minimal
    # optimal path even when zero-cost cycles exist.
    pred = np.full(net.n_nodes, -1)
    seen = np.zeros(net.n_nodes, dtype=bool)
    seen[exo.origin] = True
    frontier = [exo.origin]
    out = [[] for _ in range(net.n_nodes)]
    for a in np.flatnonzero(tight):
        out[tails[a]].append(a)
    while frontier and not seen[exo.destination]:
        nxt = []
        for v in frontier:
            for a in out[v]:
                w = heads[a]
                if not seen[w]:
                    seen[w] = True
                    pred[w] = a
                    nxt.append(w)
        frontier = nxt
    x = np.zeros(net.n_arcs)
    v = exo.destination
    while v != exo.origin:
        a = pred[v]
        x[a] = 1.0
        v = tails[a]
    return x


def optimal_value(theta, inst: ForwardInstance) -> float:
    return solve_forward(theta, inst)[0]


def count_optimal(theta, inst: ForwardInstance) -> int:
    return optimal_set(theta, inst).n_optimal


def path_count_binomial(rows: int, cols: int) -> int:
    """Number of monotone corner-to-corner lattice paths on a rows x cols grid."""
    return math.comb(rows + cols - 2, rows - 1)
