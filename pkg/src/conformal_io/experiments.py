"""Experiment pipelines shared by the command line and the acceptance tests.

Every pipeline takes an :class:`ExperimentConfig` and one seed and returns
plain rows; fan-out over seeds and CSV writing happen in :mod:`.cli`.

The classic baseline fits on train plus validation and prescribes a uniform
draw from the optimal set of its estimate.  The robust policy fits on train
only, calibrates the cone half-angle on validation and prescribes the
robust forward solution.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibration import alpha_from_scores, calibration_rank, compute_scores
from .core import ConeUncertaintySet, DecisionDataset
from .errors import ConfigError
from .estimation import fit_suboptimality
from .evaluation import (GroundTruthConfig, SyntheticData, config_hash, coverage_from_scores, estimate_gaps,
                         generate_synthetic)
from .forward import forward_oracle
from .robust import solve_rfo


@dataclass
class ExperimentConfig:
    """Settings of one experiment; see the README for the JSON schema."""

    kind: str = "shortest_path"
    grid: tuple = (5, 5)
    n_items: int = 10
    n: int = 1000
    fractions: tuple = (0.6, 0.2, 0.2)
    gammas: tuple = (0.8,)
    seeds: tuple = (0, 1, 2, 3, 4)
    alpha: float | None = None
    val_sizes: tuple = (50, 100, 200)
    split_ratios: tuple = (0.2, 0.4, 0.6, 0.8)
    split_sizes: tuple = (160, 320, 480, 640, 800)
    n_test: int = 200
    rfo_max_iter: int = 1000
    io_max_iter: int = 200
    noise: bool = True

    def __post_init__(self):
        self.grid = tuple(int(v) for v in self.grid)
        self.fractions = tuple(float(v) for v in self.fractions)
        self.gammas = tuple(float(v) for v in self.gammas)
        self.seeds = tuple(int(v) for v in self.seeds)
        self.val_sizes = tuple(int(v) for v in self.val_sizes)
        self.split_ratios = tuple(float(v) for v in self.split_ratios)
        self.split_sizes = tuple(int(v) for v in self.split_sizes)
        self.validate()

    def validate(self):
        if self.kind not in ("shortest_path", "knapsack"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if len(self.fractions) != 3 or any(not 0 < f < 1 for f in self.fractions):
            raise ConfigError("fractions must be three numbers in (0, 1)")
        if abs(sum(self.fractions) - 1) > 1e-9:
            raise ConfigError("fractions must sum to 1")
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        n_val = self.n_val
        if n_val < 1:
            raise ConfigError("the validation split is empty")
        for g in self.gammas:
            if not 0 <= g <= n_val / (n_val + 1):
                raise ConfigError(f"gamma {g} is outside [0, {n_val / (n_val + 1):.4f}] for {n_val} validation points")
        if self.alpha is not None and not 0 <= self.alpha <= math.pi:
            raise ConfigError("alpha must lie in [0, pi]")
        if any(not 0 < r < 1 for r in self.split_ratios):
            raise ConfigError("split ratios must lie in (0, 1)")

    @property
    def n_train(self) -> int:
        return int(round(self.fractions[0] * self.n))

    @property
    def n_val(self) -> int:
        return int(round(self.fractions[1] * self.n))

    def ground_truth(self, seed: int) -> GroundTruthConfig:
        return GroundTruthConfig(kind=self.kind, grid=self.grid, n_items=self.n_items, noise=self.noise, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def hash(self) -> str:
        return config_hash(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(d)


def generate(cfg: ExperimentConfig, seed: int, n: int | None = None, fractions=None) -> SyntheticData:
    return generate_synthetic(cfg.ground_truth(seed), n or cfg.n, fractions or cfg.fractions)


def classic_policy(theta_bar):
    def policy(inst, rng):
        return forward_oracle(theta_bar, inst, rng)
    return policy


def robust_policy(cone: ConeUncertaintySet, max_iter: int):
    def policy(inst, rng):
        return solve_rfo(cone, inst, max_iter=max_iter).x
    return policy


@dataclass
class Fitted:
    """Estimates and validation scores for one dataset."""

    theta_classic: np.ndarray
    theta_conformal: np.ndarray
    val_scores: np.ndarray
    timings: dict = field(default_factory=dict)


def fit_both(ds: DecisionDataset, io_max_iter: int = 200) -> Fitted:
    t0 = time.perf_counter()
    est_c = fit_suboptimality(ds.subset("train") + ds.subset("val"), max_iter=io_max_iter)
    t1 = time.perf_counter()
    est = fit_suboptimality(ds.subset("train"), max_iter=io_max_iter)
    t2 = time.perf_counter()
    scores, _ = compute_scores(est.theta_bar, ds.subset("val"))
    t3 = time.perf_counter()
    return Fitted(est_c.theta_bar, est.theta_bar, scores,
                  {"fit_classic": t1 - t0, "fit_conformal": t2 - t1, "calibrate": t3 - t2})


def run_compare(cfg: ExperimentConfig, seed: int) -> list:
    """Classic versus robust gaps for every gamma of the config.

    Returns rows ``(metric, mean, se)`` with metric names such as
    ``classic_aog`` or ``conformal_pog@0.8``.
    """
    data = generate(cfg, seed)
    ds = data.dataset
    fit = fit_both(ds, cfg.io_max_iter)
    test = data.test_cases()
    rng = np.random.default_rng([seed, 1])
    classic = estimate_gaps(classic_policy(fit.theta_classic), test, rng)
    rows = [("classic_aog", classic.aog, classic.aog_se), ("classic_pog", classic.pog, classic.pog_se)]
    rows += [(f"time_{k}", v, 0.0) for k, v in fit.timings.items()]
    test_scores = None
    for gamma in cfg.gammas:
        if cfg.alpha is None:
            alpha, _ = alpha_from_scores(fit.val_scores, gamma)
        else:
            alpha = cfg.alpha
        cone = ConeUncertaintySet(fit.theta_conformal, alpha)
        rep = estimate_gaps(robust_policy(cone, cfg.rfo_max_iter), test, rng)
        if test_scores is None:
            test_scores, _ = compute_scores(fit.theta_conformal, ds.subset("test"))
        tag = f"@{gamma:g}"
        rows += [
            ("alpha" + tag, alpha, 0.0),
            ("conformal_aog" + tag, rep.aog, rep.aog_se),
            ("conformal_pog" + tag, rep.pog, rep.pog_se),
            ("conformal_failed" + tag, rep.n_failed, 0.0),
            ("coverage" + tag, coverage_from_scores(test_scores, alpha), 0.0),
            ("time_prescribe" + tag, rep.timings["prescribe_evaluate"], 0.0),
        ]
    return rows


def run_coverage(cfg: ExperimentConfig, seed: int) -> list:
    """Out-of-sample coverage for every validation size and gamma.

    One estimate is fitted on the training share; validation sets of the
    requested sizes are prefixes of the validation share, so the scores are
    computed once.  Rows are ``(n_val, gamma, alpha, coverage)``.
    """
    data = generate(cfg, seed)
    ds = data.dataset
    n_val_max = max(cfg.val_sizes)
    if n_val_max > len(ds.val):
        raise ConfigError(f"validation share has {len(ds.val)} points, fewer than {n_val_max}")
    est = fit_suboptimality(ds.subset("train"), max_iter=cfg.io_max_iter)
    val = ds.subset("val")[:n_val_max]
    val_scores, _ = compute_scores(est.theta_bar, val)
    test_scores, _ = compute_scores(est.theta_bar, ds.subset("test"))
    rows = []
    for n_val in cfg.val_sizes:
        for gamma in cfg.gammas:
            calibration_rank(gamma, n_val)
            alpha, _ = alpha_from_scores(val_scores[:n_val], gamma)
            rows.append((n_val, gamma, alpha, coverage_from_scores(test_scores, alpha)))
    return rows


def run_split_sweep(cfg: ExperimentConfig, seed: int) -> list:
    """Robust gaps as the train/validation ratio and the data size vary.

    For a size ``m`` and ratio ``r`` the first ``round(r m)`` pairs train,
    the next ``m - round(r m)`` calibrate, and ``cfg.n_test`` further pairs
    are held out.  Rows are ``(size, ratio, alpha, aog, aog_se, pog, pog_se)``.
    """
    gamma = cfg.gammas[0]
    m_max = max(cfg.split_sizes)
    total = m_max + cfg.n_test
    # The generator's "validation" block holds the held-out pairs here.
    data = generate(cfg, seed, n=total, fractions=(m_max / total, cfg.n_test / total, 0.0))
    pairs = data.dataset.pairs
    test = data.test_cases("val")
    rng = np.random.default_rng([seed, 2])
    rows = []
    for m in cfg.split_sizes:
        for r in cfg.split_ratios:
            n_tr = int(round(r * m))
            train, val = pairs[:n_tr], pairs[n_tr:m]
            est = fit_suboptimality(train, max_iter=cfg.io_max_iter)
            scores, _ = compute_scores(est.theta_bar, val)
            alpha, _ = alpha_from_scores(scores, gamma)
            rep = estimate_gaps(robust_policy(ConeUncertaintySet(est.theta_bar, alpha), cfg.rfo_max_iter), test, rng)
            rows.append((m, r, alpha, rep.aog, rep.aog_se, rep.pog, rep.pog_se))
    return rows


def run_timing(cfg: ExperimentConfig, seed: int) -> list:
    """Wall-clock seconds per phase: generation, fitting, calibration, prescription."""
    t0 = time.perf_counter()
    data = generate(cfg, seed)
    t1 = time.perf_counter()
    ds = data.dataset
    est = fit_suboptimality(ds.subset("train"), max_iter=cfg.io_max_iter)
    t2 = time.perf_counter()
    scores, _ = compute_scores(est.theta_bar, ds.subset("val"))
    alpha, _ = alpha_from_scores(scores, cfg.gammas[0])
    t3 = time.perf_counter()
    cone = ConeUncertaintySet(est.theta_bar, alpha)
    test = ds.subset("test")
    iters = []
    for o in test:
        iters.append(solve_rfo(cone, o.inst, max_iter=cfg.rfo_max_iter).iterations)
    t4 = time.perf_counter()
    return [
        ("generate", t1 - t0, 0.0),
        ("fit", t2 - t1, 0.0),
        ("calibrate", t3 - t2, 0.0),
        ("calibrate_per_point", (t3 - t2) / max(1, len(ds.val)), 0.0),
        ("prescribe", t4 - t3, 0.0),
        ("prescribe_per_point", (t4 - t3) / max(1, len(test)), 0.0),
        ("rfo_iterations", float(np.mean(iters)), float(np.std(iters) / math.sqrt(max(1, len(iters))))),
    ]
