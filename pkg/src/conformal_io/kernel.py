"""Small numerical kernels: order statistics, ball-constrained LPs, cap support."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConeUncertaintySet, as_vector
from .errors import IterationLimitError
from .simplex import CuttingPlaneLP

BALL_TOL = 1e-8
GAP_TOL = 1e-7


def quantile_gamma(values, tau: int) -> float:
    """Return the ``tau``-th largest entry of ``values`` (1-based, with multiplicity)."""
    arr = np.asarray(values, dtype=float).ravel()
    tau = int(tau)
    if not 1 <= tau <= arr.size:
        raise ValueError(f"tau must lie in [1, {arr.size}], got {tau}")
    return float(np.sort(arr)[::-1][tau - 1])


@dataclass
class LinearConstraints:
    """Rows ``A_ub z <= b_ub`` and ``A_eq z = b_eq`` plus simple bounds on ``z``."""

    n: int
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    up: np.ndarray | None = None


@dataclass
class BallLpResult:
    value: float
    argmax: np.ndarray
    iterations: int
    cuts: int


def ball_constrained_lp_max(c, constraints: LinearConstraints | None = None, n_ball: int | None = None,
                            max_iter: int = 500, tol: float = BALL_TOL,
                            gap_tol: float = GAP_TOL) -> BallLpResult:
    """Maximize ``c @ z`` over linear constraints and ``||z[:n_ball]||_2 <= 1``.

    Kelley's outer approximation: the ball is replaced by the box
    ``|z_i| <= 1`` and the tangent cut at ``c/||c||``; while the LP optimum
    ``z`` has ``||z[:n_ball]|| > 1 + tol``, the tangent cut
    ``z^T (z/||z||) <= 1`` is added and the LP re-solved (warm-started).

    The returned value is the final LP value, an upper bound on the true
    maximum.  Its excess shrinks with ``tol`` but is amplified when the
    linear rows cut the ball in a thin sliver (for a cap of half-angle
    ``alpha`` it scales like ``tol / sin(alpha)``), hence the tight default.
    When all constraints are homogeneous the scaled iterate ``z/||z||`` is
    feasible, and the loop also stops once the LP value exceeds its value by
    at most ``gap_tol``; the scaled point and its value are returned then.

    Parameters
    ----------
    c : array_like
        Objective over all variables.
    constraints : LinearConstraints, optional
        Extra linear rows and bounds; ``None`` means the ball alone.
    n_ball : int, optional
        Number of leading variables inside the ball (default: all).
    """
    c = as_vector(c, name="c")
    n = c.shape[0]
    k = n if n_ball is None else int(n_ball)
    cons = constraints or LinearConstraints(n)
    lo = np.full(n, -np.inf) if cons.lo is None else np.asarray(cons.lo, dtype=float).copy()
    up = np.full(n, np.inf) if cons.up is None else np.asarray(cons.up, dtype=float).copy()
    lo[:k] = np.maximum(lo[:k], -1.0)
    up[:k] = np.minimum(up[:k], 1.0)
    G = h = None
    if cons.A_ub is not None and len(cons.A_ub):
        G = -np.atleast_2d(np.asarray(cons.A_ub, dtype=float))
        h = -np.asarray(cons.b_ub, dtype=float)
    E = e = None
    if cons.A_eq is not None and len(cons.A_eq):
        E, e = cons.A_eq, cons.b_eq
    lp = CuttingPlaneLP(-c, lo, up, G=G, h=h, E=E, e=e)

    def cut_row(direction):
        row = np.zeros(n)
        row[:k] = -direction
        return row

    # With homogeneous constraints (zero right-hand sides, bounds at 0 or
    # infinite) the iterate scaled into the ball stays feasible, which gives
    # a lower bound and lets the loop stop on the bound gap as well.
    rhs = [np.asarray(v, dtype=float).ravel() for v in (cons.b_ub, cons.b_eq) if v is not None]
    bnds = [np.asarray(v, dtype=float).ravel() for v in (cons.lo, cons.up) if v is not None]
    homogeneous = all(np.all(v == 0) for v in rhs) and all(np.all((v == 0) | np.isinf(v)) for v in bnds)

    ck = c[:k]
    cuts = 0
    if np.linalg.norm(ck) > 0:
        lp.add_rows(cut_row(ck / np.linalg.norm(ck)), [-1.0])
        cuts += 1
    best = None
    for it in range(1, max_iter + 1):
        sol = lp.solve()
        z = sol.x
        norm = float(np.linalg.norm(z[:k]))
        best = BallLpResult(-sol.objective, z, it, cuts)
        if norm <= 1.0 + tol:
            return best
        if homogeneous and -sol.objective * (1.0 - 1.0 / norm) <= gap_tol * max(1.0, float(np.linalg.norm(ck))):
            return BallLpResult(-sol.objective / norm, z / norm, it, cuts)
        lp.add_rows(cut_row(z[:k] / norm), [-1.0])
        cuts += 1
    raise IterationLimitError(f"Kelley cutting planes did not reach the ball after {max_iter} iterations", best)


def spherical_cap_support(x, cone: ConeUncertaintySet) -> tuple[float, np.ndarray]:
    """Maximize ``theta @ x`` over the cap ``{||theta|| <= 1, theta @ center >= cos(alpha)}``.

    Closed form with ``a = x @ center`` and ``p = x - a * center``: when the
    angle between ``x`` and the center is at most ``alpha`` the maximizer is
    ``x/||x||``; otherwise it lies on the rim, at
    ``cos(alpha) * center + sin(alpha) * p/||p||``, with value
    ``a cos(alpha) + ||p|| sin(alpha)``.
    """
    x = as_vector(x, cone.dim, "x")
    center = cone.center
    alpha = cone.half_angle
    nx = float(np.linalg.norm(x))
    if nx == 0.0:
        return 0.0, center.copy()
    a = float(x @ center)
    if a >= nx * math.cos(alpha):
        return nx, x / nx
    p = x - a * center
    npn = float(np.linalg.norm(p))
    if npn <= 1e-15 * nx:
        # x points straight away from the center; any rim point is optimal.
        j = int(np.argmin(np.abs(center)))
        e = np.zeros_like(center)
        e[j] = 1.0
        p = e - center[j] * center
        npn_dir = p / np.linalg.norm(p)
        return a * math.cos(alpha), math.cos(alpha) * center + math.sin(alpha) * npn_dir
    theta = math.cos(alpha) * center + math.sin(alpha) * (p / npn)
    return a * math.cos(alpha) + npn * math.sin(alpha), theta
