"""Command-line batch runner.

Each subcommand writes its CSV outputs plus ``manifest.json`` (command,
config, config hash, seeds, files) into ``--out``.  Report CSVs carry the
seed and config hash on every row.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .analytic import analytic_table
from .calibration import alpha_from_scores, compute_scores
from .core import ConeUncertaintySet
from .dataio import read_dataset_csv, write_dataset_csv
from .errors import ConfigError, ConformalIOError
from .estimation import PointEstimate, fit_suboptimality
from .evaluation import config_hash, gap, mean_se, write_report_csv
from .experiments import (ExperimentConfig, generate, run_compare, run_coverage, run_split_sweep,
                          run_timing)
from .robust import solve_rfo

log = logging.getLogger("conformal_io")


def _load_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        with open(args.config) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: {exc}") from exc
    if getattr(args, "gamma", None):
        d["gammas"] = [float(g) for g in args.gamma.split(",")]
    if getattr(args, "seed", None) is not None:
        d["seeds"] = [args.seed]
    return ExperimentConfig.from_dict(d)


def _write_manifest(out, command, cfg, files, extra=None):
    man = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict() if cfg is not None else None,
        "config_hash": cfg.hash() if cfg is not None else None,
        "seeds": list(cfg.seeds) if cfg is not None else None,
        "files": sorted(files),
    }
    if extra:
        man.update(extra)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)


def _map(fn, cfg, jobs):
    """Run ``fn(cfg, seed)`` for every seed, in parallel when ``jobs > 1``."""
    if jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, [cfg] * len(cfg.seeds), cfg.seeds))
    return [fn(cfg, s) for s in cfg.seeds]


def _table_csv(path, header, rows, seed, chash):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header) + ["seed", "config_hash"])
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r] + [seed, chash])


def _provenance(args, data_path, *paths):
    """Seed and hash for commands driven by input files rather than a config.

    The hash covers the bytes of the inputs; the seed comes from ``--seed``
    or else from the dataset's own provenance column.
    """
    h = hashlib.sha256()
    for p in (data_path,) + paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    seed = args.seed
    if seed is None:
        with open(data_path, newline="") as fh:
            first = next(csv.DictReader(fh), None) or {}
        seed = first.get("seed", "")
    return ("" if seed is None else seed), h.hexdigest()[:12]


# -- subcommands --------------------------------------------------------------

def cmd_generate(args):
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    data = generate(cfg, seed)
    write_dataset_csv(data.dataset, os.path.join(args.out, "dataset.csv"), seed, cfg.hash())
    # Hidden quantities for evaluation, kept out of the estimator's view.
    with open(os.path.join(args.out, "hidden.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        d = data.theta_star.shape[0]
        w.writerow(["k"] + [f"theta_hat_{i + 1}" for i in range(d)] + ["seed", "config_hash"])
        w.writerow(["star"] + [repr(float(v)) for v in data.theta_star] + [seed, cfg.hash()])
        for k, th in enumerate(data.theta_hat):
            w.writerow([k] + [repr(float(v)) for v in th] + [seed, cfg.hash()])
    _write_manifest(args.out, "generate", cfg, ["dataset.csv", "hidden.csv"])


def cmd_fit(args):
    ds = read_dataset_csv(args.data)
    seed, chash = _provenance(args, args.data)
    which = ds.subset("train") + (ds.subset("val") if args.use_val else [])
    est = fit_suboptimality(which)
    with open(os.path.join(args.out, "estimate.json"), "w") as fh:
        fh.write(est.to_json())
    _table_csv(os.path.join(args.out, "estimate.csv"), ["i", "theta_bar"],
               [(i, float(v)) for i, v in enumerate(est.theta_bar)], seed, chash)
    _write_manifest(args.out, "fit", None, ["estimate.json", "estimate.csv"],
                    {"data": args.data, "iterations": est.iterations, "training_loss": est.training_loss})


def _load_estimate(path) -> PointEstimate:
    with open(path) as fh:
        return PointEstimate.from_json(fh.read())


def cmd_calibrate(args):
    ds = read_dataset_csv(args.data)
    est = _load_estimate(args.estimate)
    seed, chash = _provenance(args, args.data, args.estimate)
    scores, _ = compute_scores(est.theta_bar, ds.subset("val"))
    gammas = [float(g) for g in (args.gamma or "0.8").split(",")]
    rows = []
    for g in gammas:
        alpha, tau = alpha_from_scores(scores, g)
        rows.append((g, tau, alpha))
    _table_csv(os.path.join(args.out, "calibration.csv"), ["gamma", "tau", "alpha"], rows, seed, chash)
    _table_csv(os.path.join(args.out, "scores.csv"), ["k", "score"],
               [(int(k), float(s)) for k, s in zip(ds.val, scores)], seed, chash)
    _write_manifest(args.out, "calibrate", None, ["calibration.csv", "scores.csv"], {"data": args.data})


def cmd_prescribe(args):
    ds = read_dataset_csv(args.data)
    est = _load_estimate(args.estimate)
    cone = ConeUncertaintySet(est.theta_bar, args.alpha)
    seed, chash = _provenance(args, args.data, args.estimate)
    rows = []
    for k in ds.test:
        sol = solve_rfo(cone, ds.pairs[k].inst, max_iter=args.max_iter)
        rows.append([int(k), repr(sol.worst_case_value)] + [repr(float(v)) for v in sol.x] + [seed, chash])
    d = ds.pairs[0].inst.dim
    with open(os.path.join(args.out, "decisions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "worst_case_value"] + [f"x_{i + 1}" for i in range(d)] + ["seed", "config_hash"])
        w.writerows(rows)
    _write_manifest(args.out, "prescribe", None, ["decisions.csv"], {"alpha": args.alpha, "data": args.data})


def cmd_evaluate(args):
    ds = read_dataset_csv(args.data)
    seed, chash = _provenance(args, args.data, args.hidden, args.decisions)
    with open(args.hidden, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    theta_star = np.array([float(v) for v in rows[0][1:-2]])
    theta_hat = {int(r[0]): np.array([float(v) for v in r[1:-2]]) for r in rows[1:]}
    with open(args.decisions, newline="") as fh:
        dec = {int(r["k"]): np.array([float(v) for c, v in r.items() if c.startswith("x_")])
               for r in csv.DictReader(fh)}
    aogs = [gap(theta_star, dec[k], ds.pairs[k].inst) for k in sorted(dec)]
    pogs = [gap(theta_hat[k], dec[k], ds.pairs[k].inst) for k in sorted(dec)]
    rows = [("aog",) + mean_se(aogs), ("pog",) + mean_se(pogs), ("n_test", len(aogs), 0.0)]
    write_report_csv(os.path.join(args.out, "report.csv"), rows, seed, chash)
    _write_manifest(args.out, "evaluate", None, ["report.csv"])


def cmd_compare(args):
    cfg = _load_config(args)
    results = _map(run_compare, cfg, args.jobs)
    path = os.path.join(args.out, "compare.csv")
    for i, (seed, rows) in enumerate(zip(cfg.seeds, results)):
        write_report_csv(path, rows, seed, cfg.hash(), append=i > 0)
    _write_manifest(args.out, "compare", cfg, ["compare.csv"])


def cmd_coverage(args):
    cfg = _load_config(args)
    results = _map(run_coverage, cfg, args.jobs)
    path = os.path.join(args.out, "coverage.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_val", "gamma", "alpha", "coverage", "seed", "config_hash"])
        for seed, rows in zip(cfg.seeds, results):
            for r in rows:
                w.writerow([r[0], repr(r[1]), repr(float(r[2])), repr(float(r[3])), seed, cfg.hash()])
    _write_manifest(args.out, "coverage-sweep", cfg, ["coverage.csv"])


def cmd_split(args):
    cfg = _load_config(args)
    results = _map(run_split_sweep, cfg, args.jobs)
    path = os.path.join(args.out, "split_sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "train_ratio", "alpha", "aog", "aog_se", "pog", "pog_se", "seed", "config_hash"])
        for seed, rows in zip(cfg.seeds, results):
            for r in rows:
                w.writerow([r[0], repr(r[1])] + [repr(float(v)) for v in r[2:]] + [seed, cfg.hash()])
    _write_manifest(args.out, "split-sweep", cfg, ["split_sweep.csv"])


def cmd_table(args):
    alpha = math.pi / 4 if args.alpha is None else args.alpha
    # Deterministic closed forms: no seed, the hash covers the half-angle.
    rows = [(policy, metric, float(u), float(v)) for policy, metric, u, v in analytic_table(alpha=alpha)]
    _table_csv(os.path.join(args.out, "analytic_table.csv"), ["policy", "metric", "u", "value"], rows,
               "", config_hash({"alpha": alpha}))
    _write_manifest(args.out, "analytic-table", None, ["analytic_table.csv"], {"alpha": alpha})


def cmd_timing(args):
    cfg = _load_config(args)
    results = _map(run_timing, cfg, args.jobs)
    path = os.path.join(args.out, "timing.csv")
    for i, (seed, rows) in enumerate(zip(cfg.seeds, results)):
        write_report_csv(path, rows, seed, cfg.hash(), append=i > 0)
    _write_manifest(args.out, "timing", cfg, ["timing.csv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conformal-io", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help, config=True):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, default=None)
        if config:
            sp.add_argument("--config", default=None, help="JSON experiment config")
            sp.add_argument("--gamma", default=None, help="comma-separated target coverages")
            sp.add_argument("--jobs", type=int, default=1, help="worker processes over seeds")
        sp.set_defaults(func=fn)
        return sp

    add("generate", cmd_generate, "draw a synthetic dataset")
    sp = add("fit", cmd_fit, "fit a cost vector to a dataset", config=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--use-val", action="store_true", help="fit on train plus validation")
    sp = add("calibrate", cmd_calibrate, "calibrate the cone half-angle on validation", config=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--estimate", required=True)
    sp.add_argument("--gamma", default=None)
    sp = add("prescribe", cmd_prescribe, "solve the robust problem on the test split", config=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--estimate", required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--max-iter", type=int, default=1000)
    sp = add("evaluate", cmd_evaluate, "optimality gaps of prescribed decisions", config=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--hidden", required=True)
    sp.add_argument("--decisions", required=True)
    add("coverage-sweep", cmd_coverage, "coverage over validation sizes and gammas")
    add("compare", cmd_compare, "classic versus robust gaps")
    add("split-sweep", cmd_split, "robust gaps over train/validation ratios and sizes")
    sp = add("analytic-table", cmd_table, "closed-form gap table of the 2-D example", config=False)
    sp.add_argument("--alpha", type=float, default=None)
    add("timing", cmd_timing, "wall-clock time per phase")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except (ConformalIOError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
