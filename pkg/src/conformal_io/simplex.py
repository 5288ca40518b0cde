"""Dense bounded revised simplex.

Every row ``i`` of a problem gets a logical variable ``r_i = a_i @ x`` whose
bounds carry the row sense, so the engine only ever sees the homogeneous
system ``[A, -I] (x, r) = 0`` plus simple bounds on every variable.  The
basis inverse is kept explicitly and refreshed from scratch every
``REFACTOR_EVERY`` pivots.

Phase 1 adds one artificial per row that is violated at the starting point
(structurals at a finite bound, or zero when free) and minimizes their sum.
Pricing is Dantzig's rule; after a long run of degenerate pivots the engine
switches to Bland's smallest-index rule until the objective strictly
improves again.  Cycles consist of degenerate pivots only and Bland's rule
cannot cycle, so the method terminates.

Two front ends share the engine:

* :func:`simplex_solve` for a one-off :class:`LinearProgram`;
* :class:`CuttingPlaneLP` for master problems that grow by ``>=`` rows.  It
  works on the LP dual, where a new row of the primal is a new column, so the
  previous basis stays feasible and every re-solve is warm-started.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from .errors import (
    DimensionError,
    InfeasibleLPError,
    IterationLimitError,
    NumericalError,
    UnboundedLPError,
)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
DEGENERATE_RUN_BEFORE_BLAND = 1000
PERTURBATION = 1e-9

_BASIC, _AT_LOWER, _AT_UPPER, _FREE_ZERO = 0, 1, 2, 3


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """``min`` or ``max`` of ``c @ x`` subject to ``A x (<=|=|>=) b`` and ``lo <= x <= up``.

    ``senses`` holds one of ``"<="``, ``"="`` or ``">="`` per row.  Bounds may be
    infinite; by default every variable is non-negative.
    """

    c: np.ndarray
    A: np.ndarray | None = None
    senses: list = field(default_factory=list)
    b: np.ndarray | None = None
    lo: np.ndarray | None = None
    up: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        if self.A is None:
            self.A = np.zeros((0, n))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.shape[0] == 0:
            self.A = self.A.reshape(0, n)
        m = self.A.shape[0]
        self.b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float)
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float)
        self.up = np.full(n, np.inf) if self.up is None else np.asarray(self.up, dtype=float)
        self.senses = list(self.senses)
        if self.A.shape[1] != n or self.b.shape != (m,) or len(self.senses) != m:
            raise DimensionError("inconsistent LP dimensions")
        if self.lo.shape != (n,) or self.up.shape != (n,):
            raise DimensionError("bounds must have one entry per variable")
        if any(s not in ("<=", "=", ">=") for s in self.senses):
            raise ValueError("row senses must be '<=', '=' or '>='")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")
        if np.any(self.lo > self.up):
            raise ValueError("a lower bound exceeds its upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rlo = np.full(self.n_rows, -np.inf)
        rup = np.full(self.n_rows, np.inf)
        for i, s in enumerate(self.senses):
            if s in ("=", ">="):
                rlo[i] = self.b[i]
            if s in ("=", "<="):
                rup[i] = self.b[i]
        return rlo, rup


@dataclass
class LpSolution:
    """Result of a solve.

    ``duals[i]`` is the rate of change of the optimal objective per unit
    increase of the right-hand side of row ``i`` (zero for inactive rows), in
    the problem's own sense.  ``reduced_costs`` follow the same convention for
    the variable bounds.
    """

    status: LpStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Engine:
    """Bounded revised simplex on ``[-I, Art, A] z = 0`` with bounds on ``z``.

    Variable layout: logicals ``0..m-1``, artificials next, structurals last.
    Structural columns can be appended after construction.
    """

    def __init__(self, A, cost, lo, up, rlo, rup, max_iter=None):
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        self.m = m
        self.max_iter = max_iter
        self.iterations = 0

        lo = np.asarray(lo, dtype=float)
        up = np.asarray(up, dtype=float)
        x_s = np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))
        act = A @ x_s if n else np.zeros(m)
        below = act < rlo - PRIMAL_TOL
        above = act > rup + PRIMAL_TOL
        crash = self._crash(A, lo, up, x_s, act, rlo, rup, below | above)
        for i, j in crash.items():
            below[i] = above[i] = False
        art_rows = np.flatnonzero(below | above)
        art_sign = np.where(below[art_rows], 1.0, -1.0)
        na = len(art_rows)
        self.n_art = na
        self.s0 = m + na

        cap = max(16, self.s0 + 2 * n)
        self.M = np.zeros((m, cap))
        self.M[:, :m] = -np.eye(m)
        self.M[art_rows, m + np.arange(na)] = art_sign
        self.M[:, self.s0:self.s0 + n] = A
        self.ncols = self.s0 + n

        tot = cap
        self.cost = np.zeros(tot)
        self.cost[self.s0:self.s0 + n] = cost
        self.lo = np.zeros(tot)
        self.up = np.zeros(tot)
        self.lo[:m], self.up[:m] = rlo, rup
        self.lo[m:self.s0], self.up[m:self.s0] = 0.0, np.inf
        self.lo[self.s0:self.s0 + n], self.up[self.s0:self.s0 + n] = lo, up
        self.x = np.zeros(tot)
        self.x[self.s0:self.s0 + n] = x_s
        self.state = np.zeros(tot, dtype=np.int8)
        self.state[self.s0:self.s0 + n] = np.where(
            np.isfinite(lo), _AT_LOWER, np.where(np.isfinite(up), _AT_UPPER, _FREE_ZERO)
        )

        # Logical basic unless its row is violated; then it sits at the
        # violated bound and the row's artificial absorbs the difference.
        basis = np.arange(m)
        self.x[:m] = act
        for k, (i, s) in enumerate(zip(art_rows, art_sign)):
            bound = rlo[i] if s > 0 else rup[i]
            self.x[i] = bound
            self.state[i] = _AT_LOWER if s > 0 else _AT_UPPER
            self.x[m + k] = s * (bound - act[i])
            basis[i] = m + k
        # Crashed rows: a unit structural column absorbs the violation instead.
        for i, j in crash.items():
            col = A[i, j]
            bound = rlo[i] if act[i] < rlo[i] else rup[i]
            self.x[i] = bound
            self.state[i] = _AT_LOWER if act[i] < rlo[i] else _AT_UPPER
            self.x[self.s0 + j] = x_s[j] + (bound - act[i]) / col
            basis[i] = self.s0 + j
        self.basis = basis
        self.state[basis] = _BASIC
        self.Binv = np.linalg.inv(self.M[:, basis]) if m else np.zeros((0, 0))
        self.pivots_since_refactor = 0
        self.phase1_done = na == 0

    @staticmethod
    def _crash(A, lo, up, x_s, act, rlo, rup, violated):
        """Pick, for violated rows, a structural that only appears in that row.

        Such a column can enter the starting basis in place of an artificial
        if its bounds allow the value that restores the row.
        """
        chosen = {}
        if not violated.any() or A.shape[1] == 0:
            return chosen
        nnz = np.count_nonzero(A, axis=0)
        used = set()
        for j in np.flatnonzero(nnz == 1):
            i = int(np.flatnonzero(A[:, j])[0])
            if not violated[i] or i in chosen or j in used:
                continue
            bound = rlo[i] if act[i] < rlo[i] else rup[i]
            value = x_s[j] + (bound - act[i]) / A[i, j]
            if lo[j] - PRIMAL_TOL <= value <= up[j] + PRIMAL_TOL:
                chosen[i] = int(j)
                used.add(j)
        return chosen

    # ------------------------------------------------------------------ columns
    def add_columns(self, A_new, cost, lo, up):
        A_new = np.asarray(A_new, dtype=float).reshape(self.m, -1)
        k = A_new.shape[1]
        if np.any(np.asarray(lo) > 0) or np.any(np.asarray(up) < 0):
            raise ValueError("appended columns must admit the value 0")
        need = self.ncols + k
        if need > self.M.shape[1]:
            cap = max(need, 2 * self.M.shape[1])
            self.M = np.hstack([self.M, np.zeros((self.m, cap - self.M.shape[1]))])
            for name in ("cost", "lo", "up", "x"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.zeros(cap - arr.shape[0])]))
            self.state = np.concatenate([self.state, np.zeros(cap - self.state.shape[0], dtype=np.int8)])
        sl = slice(self.ncols, need)
        self.M[:, sl] = A_new
        self.cost[sl] = cost
        self.lo[sl], self.up[sl] = lo, up
        self.x[sl] = 0.0
        self.state[sl] = np.where(np.asarray(lo) == 0, _AT_LOWER, np.where(np.asarray(up) == 0, _AT_UPPER, _FREE_ZERO))
        self.ncols = need

    @property
    def n_struct(self) -> int:
        return self.ncols - self.s0

    # ----------------------------------------------------------------- numerics
    def _refactor(self):
        B = self.M[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular basis after {self.iterations} iterations") from exc
        probe = np.cos(np.arange(self.m) + 1.0)
        resid = np.max(np.abs(B @ (Binv @ probe) - probe)) if self.m else 0.0
        if not np.isfinite(resid) or resid > 1e-6:
            raise NumericalError(
                f"basis inverse residual {resid:.2e} after {self.iterations} iterations; "
                f"max |Binv| = {np.max(np.abs(Binv)):.2e}"
            )
        self.Binv = Binv
        self.pivots_since_refactor = 0
        xn = self.x[:self.ncols].copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = -Binv @ (self.M[:, :self.ncols] @ xn)

    # --------------------------------------------------------------- iteration
    def _run(self, cost):
        """Iterate to optimality for ``cost``; return "optimal" or "unbounded"."""
        bland = False
        degenerate = 0
        nc = self.ncols
        limit = self.max_iter if self.max_iter is not None else 50 * (self.m + nc) + 1000
        while True:
            nc = self.ncols
            M = self.M[:, :nc]
            c = cost[:nc]
            y = c[self.basis] @ self.Binv if self.m else np.zeros(0)
            d = c - y @ M
            st = self.state[:nc]
            lo, up = self.lo[:nc], self.up[:nc]
            movable = up > lo
            elig = ((st == _AT_LOWER) & (d < -DUAL_TOL) & movable) | (
                (st == _AT_UPPER) & (d > DUAL_TOL) & movable
            ) | ((st == _FREE_ZERO) & (np.abs(d) > DUAL_TOL))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal"
            if self.iterations >= limit:
                raise IterationLimitError(f"simplex exceeded {limit} iterations")
            self.iterations += 1
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self.Binv @ M[:, q]
            rate = -direction * alpha
            xb = self.x[self.basis]
            lob, upb = self.lo[self.basis], self.up[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lob[dec]) / -rate[dec]
                ratios[inc] = (upb[inc] - xb[inc]) / rate[inc]
            ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
            t_row = ratios.min() if self.m else np.inf
            t_flip = up[q] - lo[q]

            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return "unbounded"
            if t_flip <= t_row:
                t = t_flip
                self.x[q] += direction * t
                self.x[self.basis] = xb + rate * t
                self.state[q] = _AT_UPPER if direction > 0 else _AT_LOWER
                degenerate = 0
                continue

            t = t_row
            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            self.x[self.basis] = xb + rate * t
            self.x[q] += direction * t
            if rate[r] < 0:
                self.x[leaving] = self.lo[leaving]
                self.state[leaving] = _AT_LOWER
            else:
                self.x[leaving] = self.up[leaving]
                self.state[leaving] = _AT_UPPER
            self.basis[r] = q
            self.state[q] = _BASIC

            piv = alpha[r]
            row_r = self.Binv[r] / piv
            # In-place rank-one update; Binv.T is the Fortran view BLAS expects.
            dger(-1.0, row_r, alpha, a=self.Binv.T, overwrite_a=True)
            self.Binv[r] = row_r
            self.pivots_since_refactor += 1
            if self.pivots_since_refactor >= REFACTOR_EVERY:
                self._refactor()

            # Bland's rule only inside long degenerate runs: a cycle can only
            # consist of degenerate pivots, and Bland cannot cycle, so every
            # run ends; a strict improvement then restores Dantzig pricing.
            if t <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_RUN_BEFORE_BLAND:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def solve(self):
        """Run phase 1 (if still needed) and phase 2; return a status string."""
        if not self.phase1_done:
            c1 = np.zeros_like(self.cost)
            c1[self.m:self.s0] = 1.0
            self._run(c1)
            self._refactor()
            infeas = float(np.sum(self.x[self.m:self.s0]))
            scale = 1.0 + float(np.max(np.abs(self.x[:self.ncols])))
            if infeas > 1e-8 * scale:
                return "infeasible"
            arts = slice(self.m, self.s0)
            self.up[arts] = 0.0
            nb = np.flatnonzero(self.state[arts] != _BASIC) + self.m
            self.x[nb] = 0.0
            self.state[nb] = _AT_LOWER
            self.phase1_done = True
        status = self._run(self.cost)
        if status == "optimal":
            self._refactor()
        return status

    def duals(self) -> np.ndarray:
        """Row multipliers ``y`` with ``B^T y = c_B``; ``y_i`` is d(objective)/d(row bound)."""
        return self.cost[self.basis] @ self.Binv if self.m else np.zeros(0)

    def structural(self) -> np.ndarray:
        return self.x[self.s0:self.ncols].copy()

    def objective(self) -> float:
        return float(self.cost[self.s0:self.ncols] @ self.x[self.s0:self.ncols])


def simplex_solve(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` with the bounded revised simplex.

    Infeasible and unbounded problems are reported through ``status`` rather
    than raised.  A numerically broken basis raises
    :class:`~conformal_io.errors.NumericalError`.
    """
    sign = -1.0 if lp.maximize else 1.0
    rlo, rup = lp.row_bounds()
    eng = _Engine(lp.A, sign * lp.c, lp.lo, lp.up, rlo, rup, max_iter=max_iter)
    status = eng.solve()
    if status == "infeasible":
        return LpSolution(LpStatus.INFEASIBLE, iterations=eng.iterations)
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=eng.iterations)
    x = eng.structural()
    y = eng.duals()
    d = sign * lp.c - y @ lp.A if lp.n_rows else sign * lp.c
    return LpSolution(
        LpStatus.OPTIMAL,
        x=x,
        objective=float(lp.c @ x),
        duals=sign * y,
        reduced_costs=sign * d,
        iterations=eng.iterations,
    )


class CuttingPlaneLP:
    """``min c @ z`` over ``G z >= h``, ``E z = e`` and bounds, with rows added over time.

    The problem is solved through its dual

        max  h @ y + e @ w + (bound terms)
        s.t. G^T y + E^T w (+ bound columns) = c,   y >= 0,  w free,

    whose rows are the primal variables.  Appending primal rows appends dual
    columns at zero, which keeps the current dual basis feasible, so each
    :meth:`solve` resumes from the last basis.  Finite variable bounds become
    fixed dual columns.  The primal solution is read off the dual's row
    multipliers.
    """

    def __init__(self, c, lo=None, up=None, G=None, h=None, E=None, e=None, max_iter=None,
                 perturbation=PERTURBATION):
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        self.n = n
        self.c = c
        # Masters are heavily degenerate (many optimal primal vertices).  A
        # tiny fixed perturbation of the costs makes every dual basic solution
        # nondegenerate with probability one, so pivots always make progress.
        # The objective is reported with the unperturbed costs.
        rng = np.random.default_rng(20240611)
        c_run = c + perturbation * (1.0 + np.abs(c)) * rng.uniform(0.5, 1.0, n)
        lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
        up = np.full(n, np.inf) if up is None else np.asarray(up, dtype=float)
        cols, gains, clo, cup = [], [], [], []
        eye = np.eye(n)
        for i in np.flatnonzero(np.isfinite(lo)):
            cols.append(eye[i])
            gains.append(lo[i])
            clo.append(0.0)
            cup.append(np.inf)
        for i in np.flatnonzero(np.isfinite(up)):
            cols.append(-eye[i])
            gains.append(-up[i])
            clo.append(0.0)
            cup.append(np.inf)
        if E is not None:
            E = np.atleast_2d(np.asarray(E, dtype=float))
            for row, rhs in zip(E, np.asarray(e, dtype=float)):
                cols.append(row)
                gains.append(rhs)
                clo.append(-np.inf)
                cup.append(np.inf)
        self.n_fixed_cols = len(cols)
        self.n_rows = 0
        Acols = np.array(cols, dtype=float).T if cols else np.zeros((n, 0))
        self._eng = _Engine(
            Acols, -np.asarray(gains, dtype=float), np.array(clo), np.array(cup), c_run, c_run.copy(),
            max_iter=max_iter,
        )
        if G is not None:
            self.add_rows(G, h)

    def add_rows(self, G, h):
        """Append rows ``G z >= h``."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if G.shape[1] != self.n or G.shape[0] != h.shape[0]:
            raise DimensionError("cut rows do not match the variable count")
        k = G.shape[0]
        self._eng.add_columns(G.T, -h, np.zeros(k), np.full(k, np.inf))
        self.n_rows += k

    @property
    def iterations(self) -> int:
        return self._eng.iterations

    def solve(self) -> LpSolution:
        """Solve the current master; raise when it is unbounded or infeasible."""
        status = self._eng.solve()
        if status == "infeasible":
            # An infeasible dual means the primal is unbounded, or (rarely) that
            # primal and dual are both infeasible; masters in this package are
            # always primal feasible, so the first reading applies.
            raise UnboundedLPError("master problem is unbounded below; more rows are needed")
        if status == "unbounded":
            raise InfeasibleLPError("master problem has no feasible point")
        z = -self._eng.duals()
        y = self._eng.structural()[self.n_fixed_cols:]
        return LpSolution(
            LpStatus.OPTIMAL,
            x=z,
            objective=float(self.c @ z),
            duals=y,
            iterations=self._eng.iterations,
        )


def dump_lp(lp: LinearProgram) -> str:
    """Render ``lp`` in a fixed plain-text layout for debugging."""
    out = io.StringIO()
    out.write(f"{'MAXIMIZE' if lp.maximize else 'MINIMIZE'} {lp.n_vars} vars {lp.n_rows} rows\n")
    out.write("OBJ " + " ".join(f"{v:.17g}" for v in lp.c) + "\n")
    for i in range(lp.n_rows):
        out.write(f"ROW {i} {lp.senses[i]} {lp.b[i]:.17g} : " + " ".join(f"{v:.17g}" for v in lp.A[i]) + "\n")
    out.write("LO " + " ".join(f"{v:.17g}" for v in lp.lo) + "\n")
    out.write("UP " + " ".join(f"{v:.17g}" for v in lp.up) + "\n")
    return out.getvalue()
