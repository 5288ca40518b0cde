import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conformal_io.core import ConeUncertaintySet, unit
from conformal_io.kernel import LinearConstraints, ball_constrained_lp_max, quantile_gamma, spherical_cap_support


def cap_by_kelley(x, cone):
    cons = LinearConstraints(len(x), A_ub=-cone.center[None, :], b_ub=[-math.cos(cone.half_angle)])
    return ball_constrained_lp_max(x, cons).value


def random_triple(rng):
    d = int(rng.integers(2, 11))
    x = rng.normal(size=d)
    center = unit(rng.normal(size=d))
    return x, ConeUncertaintySet(center, float(rng.uniform(0.01, math.pi)))


@pytest.mark.parametrize("values, tau, expected", [
    ([3, 1, 2], 2, 2), ([5, 5, 1], 1, 5), ([0.9, 0.8, 0.8, 0.7, 0.2], 4, 0.7), ([0.9, 0.8, 0.8, 0.7], 3, 0.8),
])
def test_quantile_gamma(values, tau, expected):
    assert quantile_gamma(values, tau) == expected


@pytest.mark.parametrize("tau", [0, 4])
def test_quantile_gamma_range(tau):
    with pytest.raises(ValueError):
        quantile_gamma([1, 2, 3], tau)


def test_ball_lp_examples():
    r = ball_constrained_lp_max([1.0, 0.0])
    assert r.value == pytest.approx(1.0, abs=1e-6) and np.allclose(r.argmax, [1, 0], atol=1e-6)
    cons = LinearConstraints(2, A_ub=[[1.0, -1.0]], b_ub=[0.0])
    r = ball_constrained_lp_max([1.0, 0.0], cons)
    assert r.value == pytest.approx(math.sqrt(2) / 2, abs=1e-5)
    assert np.allclose(r.argmax, [math.sqrt(2) / 2] * 2, atol=1e-4)
    r = ball_constrained_lp_max([0.0, 1.0], LinearConstraints(2, A_ub=[[0.0, 1.0]], b_ub=[0.0]))
    assert r.value == pytest.approx(0.0, abs=1e-8)


def test_ball_lp_matches_grid_search_in_two_dimensions(rng):
    phi = np.linspace(0, 2 * math.pi, 400_001)
    circle = np.column_stack([np.cos(phi), np.sin(phi)])
    for _ in range(20):
        c = rng.normal(size=2)
        a = rng.normal(size=2)
        b = float(rng.uniform(-0.5, 0.5))
        r = ball_constrained_lp_max(c, LinearConstraints(2, A_ub=[a], b_ub=[b]))
        # the maximum of a linear function over (disc cap) lies on the circle
        # or on the chord; sample both
        t = np.linspace(-1, 1, 200_001)
        foot = a * b / (a @ a)
        direction = np.array([-a[1], a[0]]) / np.linalg.norm(a)
        chord = foot + np.outer(t, direction)
        cand = np.vstack([circle[circle @ a <= b], chord[np.linalg.norm(chord, axis=1) <= 1]])
        assert r.value == pytest.approx(float((cand @ c).max()), abs=1e-5)
        assert a @ r.argmax <= b + 1e-6 and np.linalg.norm(r.argmax) <= 1 + 1e-6


def test_spherical_cap_examples():
    c = ConeUncertaintySet(np.array([1.0, 0.0]), math.pi / 4)
    assert spherical_cap_support([1.0, 0.0], c)[0] == pytest.approx(1.0)
    v, th = spherical_cap_support([0.0, 1.0], c)
    assert v == pytest.approx(math.sqrt(2) / 2)
    assert np.allclose(th, [math.sqrt(2) / 2] * 2)
    full = ConeUncertaintySet(np.array([1.0, 0.0]), math.pi)
    assert spherical_cap_support([-1.0, 0.0], full)[0] == pytest.approx(1.0)
    assert spherical_cap_support([0.0, 0.0], c)[0] == 0.0


def test_spherical_cap_matches_rim_scan():
    # 1-D scan over the cap boundary in the plane spanned by the center and x
    rng = np.random.default_rng(7)
    for _ in range(50):
        x, cone = random_triple(rng)
        v, th = spherical_cap_support(x, cone)
        assert cone.contains(th, tol=1e-9) and np.linalg.norm(th) <= 1 + 1e-12
        assert float(th @ x) == pytest.approx(v, abs=1e-12)
        draws = rng.normal(size=(20_000, len(x)))
        draws /= np.linalg.norm(draws, axis=1, keepdims=True)
        inside = draws[draws @ cone.center >= math.cos(cone.half_angle)]
        if len(inside):
            assert (inside @ x).max() <= v + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_spherical_cap_agrees_with_kelley(seed):
    x, cone = random_triple(np.random.default_rng(seed))
    assert spherical_cap_support(x, cone)[0] == pytest.approx(cap_by_kelley(x, cone), abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_spherical_cap_is_positively_homogeneous(seed, lam):
    x, cone = random_triple(np.random.default_rng(seed))
    a = spherical_cap_support(x, cone)[0]
    b = spherical_cap_support(lam * x, cone)[0]
    assert b == pytest.approx(lam * a, rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_spherical_cap_is_monotone_in_alpha(seed):
    x, cone = random_triple(np.random.default_rng(seed))
    alphas = np.linspace(0, math.pi, 25)
    values = [spherical_cap_support(x, ConeUncertaintySet(cone.center, a))[0] for a in alphas]
    assert np.all(np.diff(values) >= -1e-12)
