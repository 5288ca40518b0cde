"""CSV serialization of decision datasets.

One file per dataset, one row per observation::

    k, split, kind, <exogenous columns>, x_1, ..., x_d

Exogenous columns depend on the problem kind:

* ``shortest_path_grid``: ``rows, cols, origin, destination``
* ``knapsack``: ``budget, w_1, ..., w_d``
* ``two_dim_lp``: ``u``

Optional trailing ``seed, config_hash`` columns record provenance.
Floats are written with ``repr`` so a round trip is exact and repeated
writes of the same dataset are byte-identical.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import DecisionDataset, ForwardInstance, Observation, ProblemKind

SPLITS = ("train", "val", "test")


def _exo_header(kind: ProblemKind, d: int) -> list:
    if kind is ProblemKind.SHORTEST_PATH_GRID:
        return ["rows", "cols", "origin", "destination"]
    if kind is ProblemKind.KNAPSACK:
        return ["budget"] + [f"w_{i + 1}" for i in range(d)]
    return ["u"]


def _exo_values(inst: ForwardInstance) -> list:
    exo = inst.exo
    if inst.kind is ProblemKind.SHORTEST_PATH_GRID:
        net = exo.network
        if net.rows is None:
            raise ValueError("only grid networks can be written to CSV")
        return [net.rows, net.cols, exo.origin, exo.destination]
    if inst.kind is ProblemKind.KNAPSACK:
        return [repr(float(exo.budget))] + [repr(float(w)) for w in exo.weights]
    return [repr(float(exo.u))]


def _instance(kind: ProblemKind, row: dict, d: int) -> ForwardInstance:
    if kind is ProblemKind.SHORTEST_PATH_GRID:
        return ForwardInstance.grid_path(int(row["rows"]), int(row["cols"]),
                                         int(row["origin"]), int(row["destination"]))
    if kind is ProblemKind.KNAPSACK:
        return ForwardInstance.knapsack([float(row[f"w_{i + 1}"]) for i in range(d)], float(row["budget"]))
    return ForwardInstance.two_dim(float(row["u"]))


def write_dataset_csv(ds: DecisionDataset, path, seed=None, chash=None) -> None:
    """Write ``ds``; ``seed`` and ``chash`` add provenance columns to every row."""
    kind = ds.kind
    d = ds.pairs[0].inst.dim
    split_of = {}
    for name in SPLITS:
        for k in getattr(ds, name):
            split_of[int(k)] = name
    prov_head = [] if seed is None else ["seed", "config_hash"]
    prov = [] if seed is None else [seed, chash]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "split", "kind"] + _exo_header(kind, d) + [f"x_{i + 1}" for i in range(d)] + prov_head)
        for k, obs in enumerate(ds.pairs):
            if obs.inst.kind is not kind:
                raise ValueError("a CSV dataset must hold a single problem kind")
            xs = [repr(float(v)) for v in obs.x]
            w.writerow([k, split_of[k], kind.value] + _exo_values(obs.inst) + xs + prov)


def read_dataset_csv(path) -> DecisionDataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no observations")
    kind = ProblemKind(rows[0]["kind"])
    d = sum(1 for c in rows[0] if c.startswith("x_"))
    pairs, splits = [], {s: [] for s in SPLITS}
    cache = {}
    for row in rows:
        k = int(row["k"])
        if k != len(pairs):
            raise ValueError("rows must be ordered by k starting at 0")
        key = tuple(v for c, v in row.items()
                    if c not in ("k", "split", "seed", "config_hash") and not c.startswith("x_"))
        if key not in cache:
            cache[key] = _instance(kind, row, d)
        x = np.array([float(row[f"x_{i + 1}"]) for i in range(d)])
        pairs.append(Observation(x, cache[key]))
        splits[row["split"]].append(k)
    return DecisionDataset(pairs, splits["train"], splits["val"], splits["test"])
