"""Closed forms for the two-dimensional LP with a quarter-circle of perceived costs.

The forward problem is ``min theta @ x`` over
``{x1 + u x2 >= u, 0 <= x1 <= u, 0 <= x2 <= 2}`` (vertices ``(0,1)``,
``(u,0)``, ``(u,2)``, ``(0,2)``), the true cost is ``(cos pi/4, sin pi/4)``
and the perceived costs are ``(cos d, sin d)`` with ``d ~ U(0, pi/2)``.
A perceived cost with angle below ``d_u = arctan(u)`` picks ``(0,1)``,
above it ``(u,0)``.  With data of both kinds the sub-optimality fit
converges to the facet normal ``theta_u = (1, u)/sqrt(1 + u^2)``.

Two families of gap formulas live here:

* :func:`classic_gaps` and :func:`conformal_gaps` return the tabulated
  reference values.  Their perceived gaps integrate over the angle ``d``
  with unit weight rather than the uniform density ``2/pi``, and the robust
  value assumes the decision ``(0,1)``.
* :func:`decision_gaps` and the ``*_exact`` helpers are expectations under
  the uniform law of ``d``; they are what a Monte Carlo run of the pipeline
  estimates, and the tests compare simulations against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import calibrate
from .core import ConeUncertaintySet, ForwardInstance, Observation
from .estimation import fit_suboptimality
from .evaluation import EvaluationReport, TestCase, estimate_gaps, gap_bounds
from .forward import forward_oracle
from .robust import solve_rfo

THETA_STAR = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])
TABLE_U = (2.0, 10.0, 50.0, 100.0)


def _check_u(u):
    if not u > 1:
        raise ValueError(f"u must exceed 1, got {u}")


def switch_angle(u: float) -> float:
    """Angle ``arctan(u)`` at which the perceived optimum moves from (0,1) to (u,0)."""
    return math.atan(u)


def limit_estimate(u: float) -> np.ndarray:
    """Facet normal ``(1, u)/sqrt(1 + u^2)``, the large-sample fitted cost."""
    _check_u(u)
    r = math.hypot(1.0, u)
    return np.array([1.0 / r, u / r])


def classic_gaps(u: float) -> tuple[float, float]:
    """Tabulated gaps of sampling uniformly from the optimal facet of ``theta_u``.

    ``aog = sqrt(2)(u - 1)/4`` and ``pog = sqrt(1 + u^2) - (u + 1)/2``.
    """
    _check_u(u)
    return math.sqrt(2) * (u - 1) / 4, math.hypot(1.0, u) - (u + 1) / 2


def conformal_gaps(u: float, alpha: float) -> tuple[float, float]:
    """Tabulated gaps ``(0, pi / (2 sqrt(1 + u^2)))`` for the robust policy, ``0 < alpha < pi/2``."""
    _check_u(u)
    if not 0 < alpha < math.pi / 2:
        raise ValueError("the closed form holds for alpha in (0, pi/2)")
    return 0.0, math.pi / (2 * math.hypot(1.0, u))


def expected_optimal_perceived(u: float) -> float:
    """``E[min(sin d, u cos d)]`` for ``d ~ U(0, pi/2)``: ``(2/pi)(1 + u - sqrt(1 + u^2))``."""
    return 2 / math.pi * (1 + u - math.hypot(1.0, u))


def decision_gaps(x, u: float) -> tuple[float, float]:
    """Exact (AOG, POG) of always prescribing the feasible point ``x``."""
    _check_u(u)
    x = np.asarray(x, dtype=float)
    aog = float(THETA_STAR @ x) - THETA_STAR[1]  # (0,1) is optimal for the true cost
    pog = 2 / math.pi * float(x.sum()) - expected_optimal_perceived(u)
    return aog, pog


def classic_gaps_exact(u: float) -> tuple[float, float]:
    """Exact gaps of a uniform draw from the facet; by linearity, those of its midpoint."""
    return decision_gaps([u / 2, 0.5], u)


def robust_decision(u: float) -> np.ndarray:
    """Minimizer of the worst case over any cone around ``theta_u`` with ``alpha > 0``.

    Every feasible ``x`` has ``theta_u @ x >= u / sqrt(1 + u^2)``, and the
    foot of the perpendicular from the origin to the facet,
    ``u (1, u)/(1 + u^2)``, attains it with worst case equal to its norm.
    """
    _check_u(u)
    return u / (1 + u * u) * np.array([1.0, u])


def robust_gaps_exact(u: float) -> tuple[float, float]:
    return decision_gaps(robust_decision(u), u)


@dataclass
class BoundConstants:
    eta: float
    sigma: float
    mu: float
    mu_cio: float
    mu_star: float


def _normal_cone_spans(u: float) -> list:
    """Angular width of the set of costs making each vertex optimal."""
    du = switch_angle(u)
    # (0,1): between (1,0) and (1,u); (u,0): between (1,u) and (-1,0);
    # (u,2) and (0,2): quarter turns.
    return [du, math.pi - du, math.pi / 2, math.pi / 2]


def bound_constants(u: float, alpha: float | None = None) -> BoundConstants:
    """Constants of the gap bounds for this example.

    ``eta`` is the largest chord ``2 sin(w/2)`` of a vertex's arc of
    rationalizing unit costs (width ``w``), which is ``2 cos(d_u / 2)`` from
    ``(u,0)``; ``sigma = ||E[theta_hat] - theta_star|| = 1 - 2 sqrt(2)/pi``;
    ``mu = E||x_hat|| = p + u (1 - p)`` with ``p = 2 d_u / pi``; the true and
    robust decisions are both taken as ``(0,1)``, so ``mu_cio = mu_star = 1``.
    ``alpha`` is accepted for interface symmetry and does not enter.
    """
    _check_u(u)
    eta = max(2 * math.sin(min(w, math.pi) / 2) for w in _normal_cone_spans(u))
    mean_hat = np.full(2, 2 / math.pi)
    sigma = float(np.linalg.norm(mean_hat - THETA_STAR))
    p = 2 * switch_angle(u) / math.pi
    mu = p * 1.0 + (1 - p) * u
    return BoundConstants(eta, sigma, mu, 1.0, 1.0)


def bound_constants_mc(u: float, n: int, rng) -> BoundConstants:
    """Monte Carlo estimate of ``sigma`` and ``mu`` (``eta`` by a dense angle scan)."""
    _check_u(u)
    inst = ForwardInstance.two_dim(u)
    d = rng.uniform(0, math.pi / 2, n)
    hats = np.column_stack([np.cos(d), np.sin(d)])
    sigma = float(np.linalg.norm(hats.mean(axis=0) - THETA_STAR))
    # The perceived optimum is (0,1) below the switch angle and (u,0) above.
    norms = np.where(d < switch_angle(u), 1.0, u)
    mu = float(norms.mean())
    # eta: scan unit costs around the circle and record which vertex wins.
    phi = np.linspace(-math.pi, math.pi, 200001)
    costs = np.column_stack([np.cos(phi), np.sin(phi)])
    values = costs @ inst.exo.vertices().T
    best = values.min(axis=1, keepdims=True)
    eta = 0.0
    for j in range(4):
        ang = phi[values[:, j] <= best[:, 0] + 1e-12]
        # Arc width is the full turn minus the largest empty gap between
        # consecutive winning angles (the wrap-around gap included).
        gaps = np.diff(np.append(ang, ang[0] + 2 * math.pi))
        width = 2 * math.pi - float(gaps.max())
        eta = max(eta, 2 * math.sin(min(width, math.pi) / 2))
    return BoundConstants(eta, sigma, mu, 1.0, 1.0)


def analytic_table(us=TABLE_U, alpha: float = math.pi / 4) -> list:
    """Rows ``(policy, metric, u, value)`` of the classic, robust and bound gap table."""
    rows = []
    for u in us:
        a, p = classic_gaps(u)
        rows += [("classic", "aog", u, a), ("classic", "pog", u, p)]
        a, p = conformal_gaps(u, alpha)
        rows += [("conformal", "aog", u, a), ("conformal", "pog", u, p)]
        c = bound_constants(u, alpha)
        pb, ab = gap_bounds(c.eta, c.sigma, alpha, c.mu, c.mu_cio, c.mu_star)
        rows += [("conformal_bound", "aog", u, ab), ("conformal_bound", "pog", u, pb)]
    return rows


@dataclass
class SimulationResult:
    classic: EvaluationReport
    conformal: EvaluationReport
    theta_classic: np.ndarray
    theta_conformal: np.ndarray
    alpha: float


def draw_data(u: float, n: int, rng, noiseless: bool = False):
    """Perceived costs on the quarter circle and the oracle's decisions."""
    inst = ForwardInstance.two_dim(u)
    if noiseless:
        hats = np.tile(THETA_STAR, (n, 1))
    else:
        d = rng.uniform(0, math.pi / 2, n)
        hats = np.column_stack([np.cos(d), np.sin(d)])
    obs = [Observation(forward_oracle(h, inst, rng), inst) for h in hats]
    return inst, hats, obs


def simulate(u: float, n: int, alpha: float | None = None, gamma: float = 0.8, rng=None,
             fractions=(0.6, 0.2, 0.2), noiseless: bool = False) -> SimulationResult:
    """Run generate, fit, calibrate, prescribe and evaluate on this example.

    The classic policy fits on train plus validation and samples uniformly
    from the optimal set of its estimate; the robust policy fits on train,
    calibrates the half-angle on validation (unless ``alpha`` is given) and
    solves the robust problem.  Both are scored on the test share.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    rng = np.random.default_rng() if rng is None else rng
    inst, hats, obs = draw_data(u, n, rng, noiseless)
    n_tr = int(round(fractions[0] * n))
    n_va = int(round(fractions[1] * n))
    train, val = obs[:n_tr], obs[n_tr:n_tr + n_va]
    test = [TestCase(h, THETA_STAR, inst) for h in hats[n_tr + n_va:]]

    est_classic = fit_suboptimality(train + val, normalization="simplex")
    est_conf = fit_suboptimality(train, normalization="simplex")
    if alpha is None:
        alpha = calibrate(est_conf.theta_bar, val, gamma).alpha_gamma
    cone = ConeUncertaintySet(est_conf.theta_bar, alpha)
    x_robust = solve_rfo(cone, inst, max_iter=1000).x  # same instance for every test case

    classic = estimate_gaps(lambda i, r: forward_oracle(est_classic.theta_bar, i, r), test, rng)
    conformal = estimate_gaps(lambda i, r: x_robust, test, rng)
    return SimulationResult(classic, conformal, est_classic.theta_bar, est_conf.theta_bar, float(alpha))
