import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conformal_io.analytic import limit_estimate, robust_decision
from conformal_io.core import ConeUncertaintySet, ForwardInstance, Sense, is_feasible, unit
from conformal_io.errors import IterationLimitError
from conformal_io.forward import knapsack_candidates, solve_forward
from conformal_io.kernel import spherical_cap_support
from conformal_io.robust import sample_path_from_flow, solve_rfo, worst_case_value
from oracles import polygon_brute_force, vertex_cap_brute_force


def test_singleton_cone_recovers_the_forward_problem(rng):
    for _ in range(10):
        inst = ForwardInstance.grid_path(3, 4, 0, 11)
        theta = unit(rng.uniform(0.1, 1, inst.dim))
        sol = solve_rfo(ConeUncertaintySet(theta, 0.0), inst)
        assert sol.worst_case_value == pytest.approx(solve_forward(theta, inst)[0], abs=1e-7)
        ks = ForwardInstance.knapsack(rng.uniform(1, 10, 6), 15.0)
        th = unit(rng.uniform(0.1, 1, 6))
        sol = solve_rfo(ConeUncertaintySet(th, 0.0), ks)
        assert sol.worst_case_value == pytest.approx(solve_forward(th, ks)[0], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_two_dim_matches_polygon_brute_force(seed):
    rng = np.random.default_rng(seed)
    u = float(rng.uniform(1.2, 6))
    cone = ConeUncertaintySet(unit(rng.uniform(0.05, 1, 2)), float(rng.uniform(0.01, math.pi / 2)))
    sol = solve_rfo(cone, ForwardInstance.two_dim(u), max_iter=1000)
    assert is_feasible(sol.x, ForwardInstance.two_dim(u), tol=1e-7)
    assert sol.worst_case_value == pytest.approx(polygon_brute_force(cone, u), abs=1e-4)


@pytest.mark.parametrize("u", [2.0, 10.0])
def test_quarter_circle_robust_decision_is_the_facet_foot(u):
    # Over the cone around the facet normal every feasible point has worst
    # case at least u/sqrt(1+u^2); the foot of the perpendicular attains it,
    # while the vertex (0,1) has worst case 1.
    cone = ConeUncertaintySet(limit_estimate(u), math.pi / 4)
    sol = solve_rfo(cone, ForwardInstance.two_dim(u), max_iter=1000)
    assert sol.worst_case_value == pytest.approx(u / math.hypot(1, u), abs=1e-6)
    # along the facet the worst case is ||x||, flat to second order at the
    # foot, so a 1e-6 value certificate pins x down to about sqrt(2e-6)
    assert np.allclose(sol.x, robust_decision(u), atol=5e-3)
    assert worst_case_value(np.array([0.0, 1.0]), cone, Sense.MINIMIZE)[0] == pytest.approx(1.0)
    assert polygon_brute_force(cone, u) == pytest.approx(sol.worst_case_value, abs=1e-4)


def test_knapsack_worst_case_matches_cap_sampling():
    eps = 1e-3
    cone = ConeUncertaintySet(unit([1.0, 1.0]), math.pi / 2 - eps)
    inst = ForwardInstance.knapsack([1, 1], 1)
    sol = solve_rfo(cone, inst)
    rng = np.random.default_rng(0)
    # 10^4 points of the cap: arc directions scaled by radii in (0, 1]
    phi = math.pi / 4 + rng.uniform(-cone.half_angle, cone.half_angle, 10_000)
    r = np.sqrt(rng.uniform(0, 1, 10_000))
    pts = np.column_stack([np.cos(phi), np.sin(phi)]) * r[:, None]
    pts = pts[pts @ cone.center >= math.cos(cone.half_angle)]
    X = knapsack_candidates(inst.exo)
    sampled = max(float((pts @ x).min()) for x in X)
    assert sol.worst_case_value == pytest.approx(sampled, abs=1e-3)
    singles = [worst_case_value(x, cone, Sense.MAXIMIZE)[0] for x in ([1.0, 0.0], [0.0, 1.0])]
    assert singles[0] == pytest.approx(singles[1], abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_knapsack_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    d = 6
    inst = ForwardInstance.knapsack(rng.uniform(1, 10, d), float(rng.uniform(5, 30)))
    cone = ConeUncertaintySet(unit(rng.uniform(0.05, 1, d)), float(rng.uniform(0, 1.5)))
    sol = solve_rfo(cone, inst)
    brute = max(worst_case_value(x, cone, Sense.MAXIMIZE)[0] for x in knapsack_candidates(inst.exo))
    assert sol.worst_case_value == pytest.approx(brute, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_certificate_and_master_monotonicity(seed):
    rng = np.random.default_rng(seed)
    o, dst = rng.choice(12, size=2, replace=False)
    inst = ForwardInstance.grid_path(3, 4, int(o), int(dst))
    cone = ConeUncertaintySet(unit(rng.uniform(0.1, 1, inst.dim)), float(rng.uniform(0.05, 0.8)))
    sol = solve_rfo(cone, inst, max_iter=1000)
    assert is_feasible(sol.x, inst, tol=1e-7) or np.allclose(inst.exo.network.incidence @ sol.x, inst.exo.supply())
    assert np.all(sol.x >= -1e-9) and np.all(sol.x <= 1 + 1e-9)
    assert sol.worst_case_value == pytest.approx(spherical_cap_support(sol.x, cone)[0], abs=1e-5)
    assert sol.worst_case_value - sol.master_values[-1] <= 1e-6 * max(1, abs(sol.master_values[-1])) + 1e-12
    assert np.all(np.diff(sol.master_values) >= -1e-9)
    assert len(sol.active_thetas) <= sol.iterations + 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_worst_case_value_grows_with_alpha(seed):
    rng = np.random.default_rng(seed)
    inst = ForwardInstance.grid_path(3, 3, 0, 8) if seed % 2 else ForwardInstance.knapsack(rng.uniform(1, 10, 5), 12.0)
    center = unit(rng.uniform(0.1, 1, inst.dim))
    values = [solve_rfo(ConeUncertaintySet(center, a), inst, max_iter=1000).worst_case_value
              for a in np.linspace(0, 1.2, 7)]
    sign = 1 if inst.sense is Sense.MINIMIZE else -1
    assert np.all(np.diff(sign * np.array(values)) >= -1e-6)


def test_iteration_cap_carries_best_iterate():
    inst = ForwardInstance.grid_path(4, 4, 0, 15)
    cone = ConeUncertaintySet(unit(np.linspace(1, 2, inst.dim)), 0.9)
    with pytest.raises(IterationLimitError) as info:
        solve_rfo(cone, inst, max_iter=2)
    best = info.value.best
    assert np.allclose(inst.exo.network.incidence @ best.x, inst.exo.supply(), atol=1e-7)
    assert best.worst_case_value == pytest.approx(spherical_cap_support(best.x, cone)[0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_rfo(ConeUncertaintySet(unit([1.0, 1.0, 1.0]), 0.1), ForwardInstance.two_dim(2.0))


def test_flow_decomposition_samples_paths_in_the_support(rng):
    inst = ForwardInstance.grid_path(2, 2, 0, 3)
    net = inst.exo.network
    # half a unit along each of the two corner paths
    x = np.zeros(net.n_arcs)
    for t, h in ((0, 1), (1, 3), (0, 2), (2, 3)):
        x[[a for a in range(net.n_arcs) if net.tails[a] == t and net.heads[a] == h][0]] = 0.5
    draws = np.array([sample_path_from_flow(x, inst, rng) for _ in range(4000)])
    assert all(is_feasible(p, inst) for p in draws[:50])
    assert np.all(draws <= (x > 0)[None, :])
    share = np.mean([p @ (x > 0) for p in draws])
    assert share == 2
    first = draws[:, [a for a in range(net.n_arcs) if net.tails[a] == 0 and net.heads[a] == 1][0]]
    assert abs(first.mean() - 0.5) <= 0.03


def test_flow_decomposition_on_robust_solution(rng):
    inst = ForwardInstance.grid_path(4, 4, 0, 15)
    cone = ConeUncertaintySet(unit(np.ones(inst.dim)), 0.5)
    sol = solve_rfo(cone, inst, max_iter=1000)
    for _ in range(20):
        p = sample_path_from_flow(sol.x, inst, rng)
        assert is_feasible(p, inst)
        assert np.all(sol.x[p > 0] > 1e-9)


def test_empty_flow_is_rejected(rng):
    inst = ForwardInstance.grid_path(2, 2, 0, 3)
    with pytest.raises(ValueError):
        sample_path_from_flow(np.zeros(inst.dim), inst, rng)
