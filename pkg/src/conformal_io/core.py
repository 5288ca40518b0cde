"""Domain types shared across the pipeline.

Decisions and cost vectors are plain 1-D ``numpy`` float arrays. The
objective is linear, ``f(theta, x) = theta @ x``, for every forward problem
in the package.

Three forward problem kinds exist:

``shortest_path_grid``
    Minimize travel cost on a rows x cols grid whose adjacent nodes are
    joined by one arc in each direction. Node ``r * cols + c`` sits in row
    ``r``, column ``c``. Arcs are listed node by node: for node ``i`` first
    the pair ``(i, i+1), (i+1, i)`` if a right neighbour exists, then
    ``(i, i+cols), (i+cols, i)`` if a lower neighbour exists. The decision
    is the arc-flow vector.
``knapsack``
    Maximize total item value subject to one budget constraint. The
    decision is a 0/1 item-indicator vector.
``two_dim_lp``
    The two-variable LP ``min theta1*x1 + theta2*x2`` subject to
    ``x1 + u*x2 >= u``, ``0 <= x1 <= u``, ``0 <= x2 <= 2``; it is the
    worked example used by :mod:`conformal_io.example1`.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionError, InfeasibleDecisionError

FEAS_TOL = 1e-9


class ProblemKind(str, enum.Enum):
    SHORTEST_PATH_GRID = "shortest_path_grid"
    KNAPSACK = "knapsack"
    TWO_DIM_LP = "two_dim_lp"


class Sense(str, enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"

    @property
    def sign(self) -> int:
        """+1 for minimization, -1 for maximization."""
        return 1 if self is Sense.MINIMIZE else -1


@dataclass(frozen=True)
class Network:
    """Directed graph given by parallel tail/head arrays."""

    n_nodes: int
    tails: tuple
    heads: tuple
    rows: int | None = None
    cols: int | None = None

    @property
    def n_arcs(self) -> int:
        return len(self.tails)

    @classmethod
    def grid(cls, rows: int, cols: int) -> "Network":
        return _grid_network(rows, cols)

    @functools.cached_property
    def incidence(self) -> np.ndarray:
        """Node-arc incidence matrix: +1 at the head, -1 at the tail."""
        mat = np.zeros((self.n_nodes, self.n_arcs))
        arcs = np.arange(self.n_arcs)
        mat[np.asarray(self.heads), arcs] += 1.0
        mat[np.asarray(self.tails), arcs] -= 1.0
        return mat

    def out_arcs(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_nodes)]
        for a, t in enumerate(self.tails):
            out[t].append(a)
        return out

    def in_arcs(self) -> list[list[int]]:
        inc = [[] for _ in range(self.n_nodes)]
        for a, h in enumerate(self.heads):
            inc[h].append(a)
        return inc


@functools.lru_cache(maxsize=32)
def _grid_network(rows: int, cols: int) -> Network:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("a grid needs at least two nodes")
    tails, heads = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                tails += [i, i + 1]
                heads += [i + 1, i]
            if r + 1 < rows:
                tails += [i, i + cols]
                heads += [i + cols, i]
    return Network(rows * cols, tuple(tails), tuple(heads), rows, cols)


@dataclass(frozen=True)
class PathParams:
    """Origin-destination pair on a network (defaults to a grid network)."""

    network: Network
    origin: int
    destination: int

    def __post_init__(self):
        n = self.network.n_nodes
        if not (0 <= self.origin < n and 0 <= self.destination < n):
            raise ValueError("origin/destination out of range")
        if self.origin == self.destination:
            raise ValueError("origin and destination must differ")

    @classmethod
    def grid(cls, rows: int, cols: int, origin: int, destination: int) -> "PathParams":
        return cls(Network.grid(rows, cols), origin, destination)

    def supply(self) -> np.ndarray:
        """Right-hand side of the flow-balance rows (in minus out)."""
        b = np.zeros(self.network.n_nodes)
        b[self.destination] = 1.0
        b[self.origin] = -1.0
        return b


@dataclass(frozen=True)
class KnapsackParams:
    weights: tuple
    budget: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty vector of positive finite numbers")
        if not math.isfinite(self.budget) or self.budget < 0:
            raise ValueError("budget must be finite and non-negative")

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def effective_budget(self) -> float:
        """Budget clipped at the total weight; equal values share one feasible set."""
        return min(float(self.budget), float(np.sum(self.weights)))


@dataclass(frozen=True)
class TwoDimParams:
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("u must be positive")

    def vertices(self) -> np.ndarray:
        """Extreme points in cyclic order around the feasible polygon."""
        u = float(self.u)
        return np.array([[0.0, 1.0], [u, 0.0], [u, 2.0], [0.0, 2.0]])


ExoParams = Union[PathParams, KnapsackParams, TwoDimParams]


@dataclass(frozen=True)
class ForwardInstance:
    """One forward problem: kind, optimization sense, dimension and exogenous data."""

    kind: ProblemKind
    sense: Sense
    dim: int
    exo: ExoParams = field(repr=False)

    def __post_init__(self):
        expected = {
            ProblemKind.SHORTEST_PATH_GRID: (Sense.MINIMIZE, PathParams),
            ProblemKind.KNAPSACK: (Sense.MAXIMIZE, KnapsackParams),
            ProblemKind.TWO_DIM_LP: (Sense.MINIMIZE, TwoDimParams),
        }
        sense, exo_type = expected[self.kind]
        if self.sense is not sense:
            raise ValueError(f"{self.kind.value} must use sense {sense.value}")
        if not isinstance(self.exo, exo_type):
            raise TypeError(f"{self.kind.value} needs {exo_type.__name__}")

    @classmethod
    def shortest_path(cls, exo: PathParams) -> "ForwardInstance":
        return cls(ProblemKind.SHORTEST_PATH_GRID, Sense.MINIMIZE, exo.network.n_arcs, exo)

    @classmethod
    def grid_path(cls, rows: int, cols: int, origin: int, destination: int) -> "ForwardInstance":
        return cls.shortest_path(PathParams.grid(rows, cols, origin, destination))

    @classmethod
    def knapsack(cls, weights, budget: float) -> "ForwardInstance":
        exo = KnapsackParams(tuple(float(v) for v in weights), float(budget))
        return cls(ProblemKind.KNAPSACK, Sense.MAXIMIZE, len(exo.weights), exo)

    @classmethod
    def two_dim(cls, u: float) -> "ForwardInstance":
        return cls(ProblemKind.TWO_DIM_LP, Sense.MINIMIZE, 2, TwoDimParams(float(u)))

    def feasible_set_key(self) -> tuple:
        """Hashable key identifying the feasible region X(u)."""
        exo = self.exo
        if isinstance(exo, PathParams):
            return (self.kind.value, exo.network, exo.origin, exo.destination)
        if isinstance(exo, KnapsackParams):
            return (self.kind.value, exo.weights, round(exo.effective_budget, 12))
        return (self.kind.value, float(exo.u))


def as_vector(values, dim: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def objective(theta, x) -> float:
    """Linear objective ``theta @ x``."""
    theta = as_vector(theta, name="theta")
    x = as_vector(x, name="x")
    if theta.shape != x.shape:
        raise DimensionError(f"theta has length {len(theta)} but x has length {len(x)}")
    return float(theta @ x)


def nu(x) -> float:
    """Lipschitz constant of ``theta -> f(theta, x)``: the Euclidean norm of ``x``."""
    return float(np.linalg.norm(as_vector(x, name="x")))


def unit(theta) -> np.ndarray:
    theta = as_vector(theta, name="theta")
    norm = np.linalg.norm(theta)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return theta / norm


def is_feasible(x, inst: ForwardInstance, tol: float = FEAS_TOL) -> bool:
    """Check the constraints of ``inst`` for decision ``x`` within ``tol``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.dim,):
        raise DimensionError(f"decision has shape {x.shape}, expected ({inst.dim},)")
    if not np.all(np.isfinite(x)):
        return False
    exo = inst.exo
    if isinstance(exo, PathParams):
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        balance = exo.network.incidence @ x - exo.supply()
        return bool(np.all(np.abs(balance) <= tol))
    if isinstance(exo, KnapsackParams):
        binary = np.all(np.minimum(np.abs(x), np.abs(x - 1)) <= tol)
        return bool(binary and exo.w @ x <= exo.budget + tol)
    u = exo.u
    return bool(
        x[0] + u * x[1] >= u - tol
        and -tol <= x[0] <= u + tol
        and -tol <= x[1] <= 2 + tol
    )


@dataclass(frozen=True)
class ConeUncertaintySet:
    """Unit vectors within angle ``half_angle`` of the unit-norm ``center``.

    ``half_angle = 0`` is accepted as the degenerate singleton cone that the
    calibration step returns for ``gamma = 0`` or when every score is 1.
    """

    center: np.ndarray
    half_angle: float

    def __post_init__(self):
        center = as_vector(self.center, name="center")
        if abs(np.linalg.norm(center) - 1.0) > 1e-10:
            raise ValueError("cone center must have unit Euclidean norm")
        if not 0.0 <= self.half_angle <= math.pi:
            raise ValueError("half angle must lie in [0, pi]")
        object.__setattr__(self, "center", center)

    @classmethod
    def around(cls, theta, half_angle: float) -> "ConeUncertaintySet":
        return cls(unit(theta), float(half_angle))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, theta, tol: float = 1e-12) -> bool:
        theta = as_vector(theta, self.dim, "theta")
        return bool(
            abs(np.linalg.norm(theta) - 1) <= 1e-9
            and theta @ self.center >= math.cos(self.half_angle) - tol
        )


@dataclass(frozen=True)
class Observation:
    """An observed decision with the forward instance it was taken in."""

    x: np.ndarray
    inst: ForwardInstance


@dataclass
class DecisionDataset:
    """Observed (decision, instance) pairs plus a train/validation/test split.

    ``train``, ``val`` and ``test`` are index arrays; together they must cover
    every pair exactly once (``test`` may be empty).
    """

    pairs: list
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.pairs = list(self.pairs)
        for k, obs in enumerate(self.pairs):
            if not is_feasible(obs.x, obs.inst):
                raise InfeasibleDecisionError(f"pair {k} is infeasible for its instance")
        self.train = np.asarray(self.train, dtype=int)
        self.val = np.asarray(self.val, dtype=int)
        self.test = np.asarray(self.test, dtype=int)
        idx = np.concatenate([self.train, self.val, self.test])
        if sorted(idx.tolist()) != list(range(len(self.pairs))):
            raise ValueError("split index sets must be disjoint and cover every pair")

    @classmethod
    def from_pairs(cls, pairs, fractions=(1.0, 0.0, 0.0)) -> "DecisionDataset":
        """Split ``pairs`` in order into consecutive train/val/test blocks."""
        n = len(pairs)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        if len(fractions) < 3 or fractions[2] == 0:
            n_val = n - n_train
        idx = np.arange(n)
        return cls(pairs, idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:])

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, which: str) -> list:
        return [self.pairs[k] for k in getattr(self, which)]

    @property
    def kind(self) -> ProblemKind:
        return self.pairs[0].inst.kind
