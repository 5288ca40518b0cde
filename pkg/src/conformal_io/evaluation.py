"""Synthetic data, optimality-gap estimators, coverage and gap bounds.

Perceived costs follow ``theta_hat = max(theta_star * p + eps, 0) + eps0``
entrywise, with ``p ~ U[p_low, p_high]`` and ``eps ~ N(0, eps_sd^2)`` drawn
per sample.  Shortest-path instances are random origin/destination pairs on
a grid; knapsack instances share item weights ``w ~ U[w_low, w_high]`` and
draw a budget ``q * sum(w)`` with ``q ~ U[q_low, q_high]`` per sample.

The gaps of a decision policy are

    AOG = mean_k s * (theta_star @ x_k - opt(theta_star, u_k))
    POG = mean_k s * (theta_hat_k @ x_k - opt(theta_hat_k, u_k))

with ``s = +1`` for minimization and ``-1`` for maximization, so both are
non-negative for feasible decisions.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DecisionDataset, ForwardInstance, Network, Observation, PathParams
from .calibration import conformity_score
from .errors import ConformalIOError
from .forward import forward_oracle, solve_forward

MAX_REDRAWS = 100


@dataclass
class GroundTruthConfig:
    """Ground truth and noise model for synthetic decision data.

    ``theta_star=None`` draws it from ``U[0, 1]^d`` with the config seed.
    """

    kind: str = "shortest_path"
    grid: tuple = (5, 5)
    n_items: int = 10
    theta_star: list | None = None
    p_low: float = 0.5
    p_high: float = 2.0
    eps_sd: float = 1.0
    eps0: float = 0.1
    noise: bool = True
    w_low: float = 1.0
    w_high: float = 10.0
    q_low: float = 0.2
    q_high: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("shortest_path", "knapsack"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        self.grid = tuple(int(v) for v in self.grid)
        if self.theta_star is not None:
            ts = np.asarray(self.theta_star, dtype=float)
            if not np.all(np.isfinite(ts)):
                raise ValueError("theta_star must be finite")
            if ts.shape != (self.dim,):
                raise ValueError(f"theta_star must have length {self.dim}")

    @property
    def dim(self) -> int:
        if self.kind == "shortest_path":
            return Network.grid(*self.grid).n_arcs
        return int(self.n_items)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


@dataclass
class SyntheticData:
    """Generated dataset plus the hidden quantities needed for evaluation.

    Estimators only ever see ``dataset``; ``theta_hat`` and ``theta_star``
    are kept apart for computing the gaps.
    """

    dataset: DecisionDataset
    theta_hat: np.ndarray = field(repr=False)
    theta_star: np.ndarray = field(repr=False)
    config: GroundTruthConfig | None = None

    def test_cases(self, which: str = "test") -> list:
        idx = getattr(self.dataset, which)
        return [TestCase(self.theta_hat[k], self.theta_star, self.dataset.pairs[k].inst) for k in idx]


@dataclass
class TestCase:
    """A held-out instance with its perceived and true costs."""

    __test__ = False  # not a pytest class

    theta_hat: np.ndarray
    theta_star: np.ndarray
    inst: ForwardInstance


def perceive(theta_star, cfg: GroundTruthConfig, rng) -> np.ndarray:
    """One draw of perceived costs around ``theta_star``."""
    if not cfg.noise:
        return np.asarray(theta_star, dtype=float).copy()
    d = len(theta_star)
    p = rng.uniform(cfg.p_low, cfg.p_high, d)
    eps = rng.normal(0.0, cfg.eps_sd, d)
    return np.maximum(theta_star * p + eps, 0.0) + cfg.eps0


def draw_instance(cfg: GroundTruthConfig, rng, weights=None) -> ForwardInstance:
    """Draw one exogenous parameter; degenerate origin = destination is redrawn."""
    if cfg.kind == "shortest_path":
        rows, cols = cfg.grid
        n = rows * cols
        for _ in range(MAX_REDRAWS):
            o, d = (int(v) for v in rng.integers(n, size=2))
            if o != d:
                return ForwardInstance.shortest_path(PathParams(Network.grid(rows, cols), o, d))
        raise ConformalIOError("could not draw a distinct origin-destination pair")
    q = rng.uniform(cfg.q_low, cfg.q_high)
    return ForwardInstance.knapsack(weights, q * float(np.sum(weights)))


def generate_synthetic(cfg: GroundTruthConfig, n: int, fractions=(0.6, 0.2, 0.2)) -> SyntheticData:
    """Draw ``n`` i.i.d. decisions ``x_k = oracle(theta_hat_k, u_k)``.

    Parameters
    ----------
    cfg : GroundTruthConfig
    n : int
        Number of pairs.
    fractions : tuple
        Train/validation/test shares, split in generation order.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    theta_star = rng.uniform(0.0, 1.0, d) if cfg.theta_star is None else np.asarray(cfg.theta_star, dtype=float)
    weights = None
    if cfg.kind == "knapsack":
        weights = rng.uniform(cfg.w_low, cfg.w_high, d)
    pairs, hats = [], []
    for _ in range(n):
        inst = draw_instance(cfg, rng, weights)
        th = perceive(theta_star, cfg, rng)
        pairs.append(Observation(forward_oracle(th, inst, rng), inst))
        hats.append(th)
    ds = DecisionDataset.from_pairs(pairs, fractions)
    return SyntheticData(ds, np.array(hats), theta_star, cfg)


@dataclass
class EvaluationReport:
    """Monte Carlo gap estimates with standard errors."""

    aog: float
    aog_se: float
    pog: float
    pog_se: float
    n_test: int
    n_failed: int = 0
    coverage: float = float("nan")
    timings: dict = field(default_factory=dict)
    aog_samples: np.ndarray | None = field(default=None, repr=False)
    pog_samples: np.ndarray | None = field(default=None, repr=False)

    def rows(self) -> list:
        """``(metric, mean, se)`` triples for CSV export."""
        out = [("aog", self.aog, self.aog_se), ("pog", self.pog, self.pog_se),
               ("n_test", self.n_test, 0.0), ("n_failed", self.n_failed, 0.0)]
        if not math.isnan(self.coverage):
            out.append(("coverage", self.coverage, 0.0))
        out.extend((f"time_{k}", v, 0.0) for k, v in self.timings.items())
        return out


def mean_se(values) -> tuple[float, float]:
    """Sample mean and standard error ``std(ddof=1) / sqrt(n)``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def gap(theta, x, inst: ForwardInstance) -> float:
    """Sense-adjusted optimality gap of ``x`` under ``theta``."""
    theta = np.asarray(theta, dtype=float)
    # Both values as dot products, so an optimal x has a gap of exactly 0.
    _, x_opt = solve_forward(theta, inst)
    return inst.sense.sign * (float(theta @ x) - float(theta @ x_opt))


def estimate_gaps(policy, test, rng=None) -> EvaluationReport:
    """Average actual and perceived optimality gaps of ``policy`` on ``test``.

    Parameters
    ----------
    policy : callable
        ``policy(inst, rng) -> x``; raising :class:`ConformalIOError` marks
        the instance as failed, and it is excluded from the averages.
    test : sequence of TestCase
    rng : numpy Generator, optional
    """
    test = list(test)
    if not test:
        raise ValueError("test set is empty")
    rng = np.random.default_rng() if rng is None else rng
    aogs, pogs = [], []
    failed = 0
    t0 = time.perf_counter()
    for case in test:
        try:
            x = np.asarray(policy(case.inst, rng), dtype=float)
        except ConformalIOError:
            failed += 1
            continue
        aogs.append(gap(case.theta_star, x, case.inst))
        pogs.append(gap(case.theta_hat, x, case.inst))
    aog, aog_se = mean_se(aogs)
    pog, pog_se = mean_se(pogs)
    return EvaluationReport(aog, aog_se, pog, pog_se, len(aogs), failed,
                            timings={"prescribe_evaluate": time.perf_counter() - t0},
                            aog_samples=np.array(aogs), pog_samples=np.array(pogs))


def coverage_from_scores(scores, half_angle: float, tol: float = 1e-8) -> float:
    """Fraction of scores with ``score >= cos(half_angle) - tol``."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores")
    return float(np.mean(scores >= math.cos(half_angle) - tol))


def empirical_coverage(cone, test_obs, method: str = "projection") -> float:
    """Fraction of test decisions rationalized by some vector in ``cone``."""
    test_obs = list(test_obs)
    if not test_obs:
        raise ValueError("test set is empty")
    scores = [conformity_score(o.x, o.inst, cone.center, method=method).score for o in test_obs]
    return coverage_from_scores(scores, cone.half_angle)


def gap_bounds(eta, sigma, alpha1, mu, mu_cio, mu_star) -> tuple[float, float]:
    """Upper bounds ``(pog_bound, aog_bound)`` on the gaps of the robust policy.

    ``pog <= (eta - 2 cos(2 alpha1) + 2) mu + eta mu_cio`` and
    ``aog <= (2 - 2 cos(2 alpha1) + eta + sigma) mu_star + (eta + sigma) mu_cio``,
    valid when the cone with half-angle ``alpha1`` meets the inverse-feasible
    set of a new decision almost surely.
    """
    for name, v in (("eta", eta), ("sigma", sigma), ("mu", mu), ("mu_cio", mu_cio), ("mu_star", mu_star)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative")
    if not 0 < alpha1 <= math.pi:
        raise ValueError("alpha1 must lie in (0, pi]")
    c2 = math.cos(2 * alpha1)
    pog = (eta - 2 * c2 + 2) * mu + eta * mu_cio
    aog = (2 - 2 * c2 + eta + sigma) * mu_star + (eta + sigma) * mu_cio
    return pog, aog


def config_hash(config: dict) -> str:
    """Short stable hash of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


REPORT_HEADER = ("metric", "mean", "se", "seed", "config_hash")


def write_report_csv(path, rows, seed, chash, append: bool = False):
    """Write ``(metric, mean, se)`` rows with provenance columns."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append or fh.tell() == 0:
            w.writerow(REPORT_HEADER)
        for metric, mean, se in rows:
            w.writerow([metric, repr(float(mean)), repr(float(se)), seed, chash])
