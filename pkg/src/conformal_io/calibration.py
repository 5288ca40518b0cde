"""Conformity scores and calibration of the cone half-angle.

For a validation pair ``(x_hat, u)`` the conformity score is

    c = max { theta @ theta_bar : x_hat optimal for FO(theta, u), ||theta|| <= 1 }.

The feasible ``theta`` form the polyhedral cone

    K = { theta : s * theta @ (x - x_hat) >= 0 for every feasible x },

(``s = +1`` when minimizing, ``-1`` when maximizing).  Since ``K`` is a
convex cone, the maximum equals ``||P_K(theta_bar)||`` and is attained at
``P_K(theta_bar) / ||P_K(theta_bar)||`` (for unit ``theta_bar``).  The
default method computes the projection by constraint generation: with
generators ``H = [h_1, ...]``, ``h = s (x - x_hat)``, the projection onto
the relaxed cone is ``theta_bar + H lam`` with
``lam = argmin_{lam >= 0} ||theta_bar + H lam||``; an exact forward solve at
that point either certifies membership in ``K`` or yields a new generator.

``method="kelley"`` solves the same problem with the ball-constrained LP
kernel instead: for shortest path through the LP-duality description of
optimality, otherwise through optimality cuts generated by forward solves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .core import ConeUncertaintySet, ForwardInstance, ProblemKind, as_vector
from .errors import InverseInfeasibleError, IterationLimitError
from .forward import solve_forward
from .kernel import LinearConstraints, ball_constrained_lp_max, quantile_gamma

CUT_TOL = 1e-7
MAX_CUTS = 200
KELLEY_PATH_MAX_ITER = 10_000


@dataclass
class ScoreResult:
    score: float
    theta: np.ndarray
    cuts: int = 0


def _violation(theta, x_hat, inst):
    """Optimal value gap ``s * (theta @ x_hat - opt)`` and a best response."""
    val, xp = solve_forward(theta, inst)
    return inst.sense.sign * (float(theta @ x_hat) - val), xp


def _score_projection(x_hat, inst, theta_bar, max_cuts, tol):
    s = inst.sense.sign
    scale = max(1.0, float(np.abs(x_hat).sum()))
    gens = []
    proj = theta_bar.copy()
    for _ in range(max_cuts + 1):
        gap, xp = _violation(proj, x_hat, inst)
        if gap <= tol * scale * max(1.0, float(np.linalg.norm(proj))):
            break
        gens.append(s * (xp - x_hat))
        H = np.array(gens).T
        lam, _ = nnls(-H, theta_bar, maxiter=50 * H.shape[1] + 100)
        proj = theta_bar + H @ lam
    else:
        raise IterationLimitError(f"projection did not converge within {max_cuts} generators", proj)
    norm = float(np.linalg.norm(proj))
    if norm <= 1e-12:
        # theta_bar lies in the polar cone; theta = 0 attains the maximum.
        return ScoreResult(0.0, np.zeros_like(theta_bar), len(gens))
    return ScoreResult(min(1.0, norm), proj / norm, len(gens))


def _score_kelley_path(x_hat, inst, theta_bar):
    """Ball LP over (theta, w, v) using the dual description of path optimality.

    ``x_hat`` is optimal for ``min theta @ x`` over the flow polytope with
    ``0 <= x <= 1`` iff there are node potentials ``w`` and arc slacks
    ``v >= 0`` with ``w_head - w_tail - v_a <= theta_a`` for every arc and
    ``w_dest - w_orig - sum(v) = theta @ x_hat`` (strong duality).
    """
    exo = inst.exo
    net = exo.network
    d, n = net.n_arcs, net.n_nodes
    N = net.incidence  # +1 at head, -1 at tail
    nz = d + n + d
    A_ub = np.zeros((d, nz))
    A_ub[:, :d] = -np.eye(d)
    A_ub[:, d:d + n] = N.T
    A_ub[:, d + n:] = -np.eye(d)
    A_eq = np.zeros((1, nz))
    A_eq[0, :d] = -x_hat
    A_eq[0, d:d + n] = exo.supply()
    A_eq[0, d + n:] = -1.0
    lo = np.full(nz, -np.inf)
    up = np.full(nz, np.inf)
    lo[d + n:] = 0.0
    lo[d + exo.origin] = up[d + exo.origin] = 0.0  # potentials are defined up to a constant
    cons = LinearConstraints(nz, A_ub=A_ub, b_ub=np.zeros(d), A_eq=A_eq, b_eq=[0.0], lo=lo, up=up)
    c = np.concatenate([theta_bar, np.zeros(n + d)])
    # Kelley needs on the order of 40 d cuts to close the ball here, more
    # than the kernel's default cap allows for grid-sized d.
    res = ball_constrained_lp_max(c, cons, n_ball=d, max_iter=KELLEY_PATH_MAX_ITER)
    return res.value, res.argmax[:d]


def _score_kelley_cuts(x_hat, inst, theta_bar, max_cuts, tol):
    s = inst.sense.sign
    d = inst.dim
    rows = []
    for _ in range(max_cuts + 1):
        cons = LinearConstraints(d, A_ub=np.array(rows) if rows else None,
                                 b_ub=np.zeros(len(rows)) if rows else None)
        res = ball_constrained_lp_max(theta_bar, cons)
        theta = res.argmax
        gap, xp = _violation(theta, x_hat, inst)
        if gap <= tol * max(1.0, float(np.abs(x_hat).sum())):
            return res.value, theta
        # Cut: s * theta @ (x' - x_hat) >= 0, written as a <= row.
        rows.append(-s * (xp - x_hat))
    raise IterationLimitError(f"optimality cut loop exceeded {max_cuts} cuts", theta)


def conformity_score(x_hat, inst: ForwardInstance, theta_bar, method: str = "projection",
                     max_cuts: int = MAX_CUTS, tol: float = 1e-10) -> ScoreResult:
    """Largest cosine similarity between ``theta_bar`` and a vector rationalizing ``x_hat``.

    Parameters
    ----------
    x_hat : array_like
        Observed decision, feasible for ``inst``.
    inst : ForwardInstance
    theta_bar : array_like
        Unit-norm point estimate.
    method : {"projection", "kelley"}

    Returns
    -------
    ScoreResult
        ``score`` in ``[0, 1]`` and the maximizer ``theta`` (unit norm, or
        zero when the score is 0 because no rationalizing vector has a
        positive inner product with ``theta_bar``).
    """
    x_hat = as_vector(x_hat, inst.dim, "x_hat")
    theta_bar = as_vector(theta_bar, inst.dim, "theta_bar")
    if abs(np.linalg.norm(theta_bar) - 1.0) > 1e-8:
        raise ValueError("theta_bar must have unit norm")
    if method == "projection":
        res = _score_projection(x_hat, inst, theta_bar, max_cuts, tol)
    elif method == "kelley":
        if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
            value, theta = _score_kelley_path(x_hat, inst, theta_bar)
        else:
            value, theta = _score_kelley_cuts(x_hat, inst, theta_bar, max_cuts, CUT_TOL)
        nt = float(np.linalg.norm(theta))
        res = ScoreResult(float(np.clip(value, -1.0, 1.0)), theta / nt if nt > 1e-9 else np.zeros_like(theta))
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(res.theta):
        gap, _ = _violation(res.theta, x_hat, inst)
        if gap > 1e-5:
            raise InverseInfeasibleError(f"score vector leaves x_hat {gap:.2e} from optimal")
    return res


@dataclass
class CalibrationResult:
    """Calibrated half-angle with the scores it came from."""

    alpha_gamma: float
    tau: int
    gamma: float
    scores: np.ndarray
    thetas: np.ndarray | None = field(default=None, repr=False)
    theta_bar: np.ndarray | None = field(default=None, repr=False)

    def cone(self) -> ConeUncertaintySet:
        return ConeUncertaintySet(self.theta_bar, self.alpha_gamma)

    def to_json(self) -> str:
        return json.dumps({
            "alpha_gamma": self.alpha_gamma,
            "tau": self.tau,
            "gamma": self.gamma,
            "scores": self.scores.tolist(),
            "theta_bar": None if self.theta_bar is None else self.theta_bar.tolist(),
        })


def calibration_rank(gamma: float, n_val: int) -> int:
    """``tau = ceil(gamma (n_val + 1))``, guarding against round-off in the product."""
    if n_val < 1:
        raise ValueError("validation set is empty")
    if gamma < 0 or gamma > n_val / (n_val + 1) + 1e-12:
        raise ValueError(
            f"gamma = {gamma} is outside [0, N_val/(N_val+1)] = [0, {n_val / (n_val + 1):.6f}], "
            "where the finite-sample coverage guarantee holds"
        )
    return max(0, math.ceil(gamma * (n_val + 1) - 1e-9))


def alpha_from_scores(scores, gamma: float) -> tuple[float, int]:
    """Half-angle ``arccos`` of the ``tau``-th largest score; ``gamma = 0`` gives 0."""
    scores = np.asarray(scores, dtype=float)
    tau = calibration_rank(gamma, scores.size)
    if tau == 0:
        return 0.0, 0
    q = quantile_gamma(np.clip(scores, -1.0, 1.0), tau)
    return float(math.acos(q)), tau


def compute_scores(theta_bar, obs, method: str = "projection"):
    """Scores and maximizers for a list of observations, in input order."""
    results = [conformity_score(o.x, o.inst, theta_bar, method=method) for o in obs]
    return np.array([r.score for r in results]), np.array([r.theta for r in results])


def calibrate(theta_bar, val_obs, gamma: float, method: str = "projection") -> CalibrationResult:
    """Calibrate the cone half-angle on validation observations.

    Parameters
    ----------
    theta_bar : array_like
        Unit-norm point estimate.
    val_obs : sequence of Observation
    gamma : float
        Target coverage, ``0 <= gamma <= N_val / (N_val + 1)``.
    """
    val_obs = list(val_obs)
    calibration_rank(gamma, len(val_obs))  # validate before the expensive part
    theta_bar = as_vector(theta_bar, name="theta_bar")
    scores, thetas = compute_scores(theta_bar, val_obs, method)
    alpha, tau = alpha_from_scores(scores, gamma)
    return CalibrationResult(alpha, tau, float(gamma), scores, thetas, theta_bar)


def calibrate_from_scores(theta_bar, scores, gamma: float) -> CalibrationResult:
    """Re-use precomputed scores for a different ``gamma``."""
    alpha, tau = alpha_from_scores(scores, gamma)
    return CalibrationResult(alpha, tau, float(gamma), np.asarray(scores, dtype=float), None,
                             as_vector(theta_bar, name="theta_bar"))
