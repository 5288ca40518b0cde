import math

import numpy as np
import pytest

from conformal_io.analytic import (TABLE_U, analytic_table, bound_constants, bound_constants_mc, classic_gaps,
                                   classic_gaps_exact, conformal_gaps, decision_gaps, expected_optimal_perceived,
                                   limit_estimate, robust_decision, robust_gaps_exact, simulate, switch_angle)
from conformal_io.core import ForwardInstance, is_feasible
from conformal_io.evaluation import gap_bounds


def test_limit_estimate_values():
    assert np.allclose(limit_estimate(2.0), [0.4472, 0.8944], atol=1e-4)
    assert np.allclose(limit_estimate(10.0), [0.0995, 0.9950], atol=1e-4)
    assert np.allclose(limit_estimate(1 + 1e-12), [math.sqrt(2) / 2] * 2, atol=1e-9)
    with pytest.raises(ValueError):
        limit_estimate(1.0)


def test_tabulated_classic_gaps():
    assert classic_gaps(2.0) == pytest.approx((0.354, 0.736), abs=1e-3)
    assert classic_gaps(100.0) == pytest.approx((35.00, 49.50), abs=5e-3)
    assert classic_gaps(1 + 1e-9)[0] == pytest.approx(0.0, abs=1e-8)


def test_tabulated_conformal_gaps():
    assert conformal_gaps(2.0, math.pi / 4) == pytest.approx((0.0, 0.702), abs=1e-3)
    assert conformal_gaps(50.0, 0.3)[1] == pytest.approx(0.0314, abs=1e-4)
    assert all(conformal_gaps(u, 0.5)[1] < math.pi / (2 * math.sqrt(2)) for u in (1.0001, 2, 10, 1e6))
    for bad in (0.0, math.pi / 2, 2.0):
        with pytest.raises(ValueError):
            conformal_gaps(2.0, bad)


def test_exact_gaps_by_quadrature():
    for u in (2.0, 10.0):
        d = np.linspace(0, math.pi / 2, 2_000_001)
        opt = np.minimum(np.sin(d), u * np.cos(d))
        assert expected_optimal_perceived(u) == pytest.approx(np.trapezoid(opt, d) / (math.pi / 2), abs=1e-9)
        aog, pog = classic_gaps_exact(u)
        assert aog == pytest.approx(classic_gaps(u)[0], abs=1e-12)  # the actual gap needs no density
        mid = np.array([u / 2, 0.5])
        assert pog == pytest.approx(np.trapezoid(np.cos(d) * mid[0] + np.sin(d) * mid[1] - opt, d) / (math.pi / 2),
                                    abs=1e-9)


def test_robust_decision_geometry():
    for u in (2.0, 10.0, 50.0):
        x = robust_decision(u)
        assert is_feasible(x, ForwardInstance.two_dim(u))
        assert x[0] + u * x[1] == pytest.approx(u)
        assert np.allclose(x / np.linalg.norm(x), limit_estimate(u))
    aog, pog = robust_gaps_exact(2.0)
    assert aog == pytest.approx(math.sqrt(2) / 2 * (2 - 1) / 5)
    assert pog == pytest.approx(2 / math.pi * (2 * 3 / 5 - 3 + math.sqrt(5)))
    assert decision_gaps([0.0, 1.0], 2.0)[0] == 0.0


def test_switch_angle_frequency():
    assert 2 * switch_angle(2.0) / math.pi == pytest.approx(0.7048, abs=1e-4)


def test_bound_constants():
    c = bound_constants(2.0, math.pi / 4)
    assert c.mu_star == 1.0 and c.mu_cio == 1.0
    assert c.mu == pytest.approx(1.295, abs=1e-3)
    # the norm of (2/pi - sqrt(2)/2) (1, 1)
    assert c.sigma == pytest.approx(math.sqrt(2) * abs(2 / math.pi - math.sqrt(2) / 2), abs=1e-12)
    assert c.sigma == pytest.approx(1 - 2 * math.sqrt(2) / math.pi, abs=1e-12)
    assert c.eta == pytest.approx(2 * math.cos(switch_angle(2.0) / 2))


@pytest.mark.parametrize("u", [2.0, 10.0])
def test_bound_constants_against_monte_carlo(u):
    exact = bound_constants(u)
    mc = bound_constants_mc(u, 1_000_000, np.random.default_rng(0))
    assert mc.sigma == pytest.approx(exact.sigma, abs=2e-3)
    assert mc.mu == pytest.approx(exact.mu, abs=3e-3 * u)
    assert mc.eta == pytest.approx(exact.eta, abs=1e-4)


def test_table_layout():
    rows = analytic_table()
    assert len(rows) == 6 * len(TABLE_U)
    assert {r[0] for r in rows} == {"classic", "conformal", "conformal_bound"}
    assert all(math.isfinite(r[3]) for r in rows)


def test_simulation_matches_exact_gaps():
    for u in (2.0, 10.0):
        res = simulate(u, 5000, alpha=math.pi / 4, rng=np.random.default_rng(1))
        # the robust decision is certified to 1e-6 in value, which fixes it
        # to about 1e-3 along the facet; its actual gap has no sampling error
        for rep, (aog, pog), slack in ((res.classic, classic_gaps_exact(u), 0.0),
                                       (res.conformal, robust_gaps_exact(u), 2e-3)):
            assert abs(rep.aog - aog) <= 3 * rep.aog_se + slack
            assert abs(rep.pog - pog) <= 3 * rep.pog_se + slack


def test_simulation_classic_actual_gap_at_u10():
    res = simulate(10.0, 5000, rng=np.random.default_rng(2))
    assert res.classic.aog == pytest.approx(3.18, abs=0.1)


def test_noiseless_simulation_has_zero_gaps():
    res = simulate(2.0, 500, rng=np.random.default_rng(3), noiseless=True)
    for rep in (res.classic, res.conformal):
        assert rep.aog == pytest.approx(0.0, abs=1e-12)
        assert rep.pog == pytest.approx(0.0, abs=1e-12)


def test_simulation_agrees_with_tabulated_closed_forms():
    for u in TABLE_U:
        res = simulate(u, 5000, alpha=math.pi / 4, rng=np.random.default_rng(4))
        for rep, (aog, pog) in ((res.classic, classic_gaps(u)), (res.conformal, conformal_gaps(u, math.pi / 4))):
            assert abs(rep.aog - aog) <= 3 * rep.aog_se
            assert abs(rep.pog - pog) <= 3 * rep.pog_se


def test_bounds_dominate_measured_conformal_gaps():
    for u in TABLE_U:
        res = simulate(u, 5000, rng=np.random.default_rng(5))
        alpha = max(res.alpha, 1e-6)
        c = bound_constants(u, alpha)
        pog_bound, aog_bound = gap_bounds(c.eta, c.sigma, alpha, c.mu, c.mu_cio, c.mu_star)
        assert res.conformal.aog <= aog_bound
        assert res.conformal.pog <= pog_bound


def test_simulate_rejects_small_n():
    with pytest.raises(ValueError):
        simulate(2.0, 50)
