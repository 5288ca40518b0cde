"""Point estimation by inverse optimization with the sub-optimality loss.

The training problem is

    min_theta  (1/N) sum_k  max_{x in X(u_k)} s * (theta @ x_hat_k - theta @ x)

with ``s = +1`` for minimization and ``-1`` for maximization forward problems,
plus a normalization that excludes ``theta = 0``.  It is solved by cutting
planes: the master LP minimizes the average of epigraph variables ``l_k``
over the cuts generated so far; for the master's ``theta'`` every forward
problem is re-solved and a cut ``l_k >= s * theta @ (x_hat_k - x')`` is
added whenever ``l'_k`` underestimates the true loss by more than
``CUT_TOL``.  The loop stops when no cut is added.

Identical observations (same decision, same feasible region) share one
epigraph variable weighted by their multiplicity; this is an exact
reformulation that keeps the master small when decisions repeat.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import Observation, as_vector, unit
from .errors import ConformalIOError, IterationLimitError
from .forward import solve_forward
from .simplex import CuttingPlaneLP

CUT_TOL = 1e-7


@dataclass
class PointEstimate:
    """A fitted cost direction.

    Attributes
    ----------
    theta_bar : ndarray
        Unit-norm estimate used as the cone center.
    raw_theta : ndarray
        Master solution before normalization.
    cut_count, iterations : int
        Cutting-plane statistics (zero for external estimates).
    lower_bounds, losses : list of float
        Per-iteration master value and true training loss of the master
        solution.
    """

    theta_bar: np.ndarray
    raw_theta: np.ndarray
    cut_count: int = 0
    iterations: int = 0
    lower_bounds: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    normalization: str = "trust_region"

    @classmethod
    def from_external(cls, theta) -> "PointEstimate":
        """Wrap an estimate produced elsewhere; it is only normalized."""
        theta = as_vector(theta, name="theta")
        return cls(unit(theta), theta.copy(), normalization="external")

    @property
    def training_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    def to_json(self) -> str:
        return json.dumps({
            "theta_bar": self.theta_bar.tolist(),
            "raw_theta": self.raw_theta.tolist(),
            "cut_count": self.cut_count,
            "iterations": self.iterations,
            "lower_bounds": self.lower_bounds,
            "losses": self.losses,
            "normalization": self.normalization,
        })

    @classmethod
    def from_json(cls, text: str) -> "PointEstimate":
        d = json.loads(text)
        return cls(np.array(d["theta_bar"]), np.array(d["raw_theta"]), d["cut_count"], d["iterations"],
                   d["lower_bounds"], d["losses"], d["normalization"])


def group_observations(obs):
    """Merge observations with equal decision and feasible region.

    Returns the representative observations and their multiplicities.
    """
    index, reps, counts = {}, [], []
    for o in obs:
        key = (o.inst.feasible_set_key(), np.asarray(o.x, dtype=float).tobytes())
        if key in index:
            counts[index[key]] += 1
        else:
            index[key] = len(reps)
            reps.append(o)
            counts.append(1)
    return reps, np.asarray(counts, dtype=float)


def suboptimality_loss(theta, obs) -> float:
    """Average sub-optimality loss of ``theta`` over ``obs`` (exact forward solves)."""
    theta = as_vector(theta, name="theta")
    total = 0.0
    for o in obs:
        s = o.inst.sense.sign
        total += s * (theta @ o.x - solve_forward(theta, o.inst)[0])
    return total / len(obs)


def fit_suboptimality(obs, max_iter: int = 200, normalization: str = "trust_region",
                      cut_tol: float = CUT_TOL) -> PointEstimate:
    """Fit a cost direction to observed decisions.

    Parameters
    ----------
    obs : sequence of Observation
        Training decisions with their forward instances.
    max_iter : int
        Cap on master solves.
    normalization : {"trust_region", "simplex"}
        ``"trust_region"`` constrains ``||theta - 1||_1 <= d/4``;
        ``"simplex"`` constrains ``theta >= 0, sum(theta) = 1``.

    Returns
    -------
    PointEstimate
    """
    obs = list(obs)
    if not obs:
        raise ValueError("training set is empty")
    d = obs[0].inst.dim
    if any(o.inst.dim != d for o in obs):
        raise ValueError("all observations must share one dimension")
    reps, counts = group_observations(obs)
    G = len(reps)
    weights = counts / counts.sum()
    signs = np.array([o.inst.sense.sign for o in reps], dtype=float)
    xhat = np.array([o.x for o in reps], dtype=float)

    if normalization == "trust_region":
        # z = (p, q, l) with theta = 1 + p - q.
        nz = 2 * d + G
        c = np.concatenate([np.zeros(2 * d), weights])
        tr = np.concatenate([-np.ones(2 * d), np.zeros(G)])
        master = CuttingPlaneLP(c, lo=np.zeros(nz), G=tr[None, :], h=[-d / 4.0])
        l_off = 2 * d

        def theta_of(z):
            return 1.0 + z[:d] - z[d:2 * d]

        def cut(g, a):
            row = np.zeros(nz)
            row[:d], row[d:2 * d], row[l_off + g] = -a, a, 1.0
            return row, float(a.sum())
    elif normalization == "simplex":
        nz = d + G
        c = np.concatenate([np.zeros(d), weights])
        eq = np.concatenate([np.ones(d), np.zeros(G)])
        master = CuttingPlaneLP(c, lo=np.zeros(nz), E=eq[None, :], e=[1.0])
        l_off = d

        def theta_of(z):
            return z[:d].copy()

        def cut(g, a):
            row = np.zeros(nz)
            row[:d], row[l_off + g] = -a, 1.0
            return row, 0.0
    else:
        raise ValueError(f"unknown normalization {normalization!r}")

    lower, losses = [], []
    cuts = 0
    theta = None
    for it in range(1, max_iter + 1):
        sol = master.solve()
        theta = theta_of(sol.x)
        ell = sol.x[l_off:]
        lower.append(float(sol.objective))
        rows, rhs = [], []
        loss = 0.0
        for g, o in enumerate(reps):
            val, xp = solve_forward(theta, o.inst)
            lg = signs[g] * (theta @ xhat[g] - val)
            loss += weights[g] * lg
            if ell[g] < lg - cut_tol:
                r, b = cut(g, signs[g] * (xhat[g] - xp))
                rows.append(r)
                rhs.append(b)
        losses.append(float(loss))
        if not rows:
            break
        master.add_rows(np.array(rows), np.array(rhs))
        cuts += len(rows)
    else:
        raise IterationLimitError(f"cutting planes did not converge in {max_iter} iterations", theta)

    norm = float(np.linalg.norm(theta))
    if norm <= 1e-12:
        raise ConformalIOError("fitted cost vector is zero")
    return PointEstimate(theta / norm, theta, cuts, it, lower, losses, normalization)
