# strategem/core/strategic/agent.py
#
# Best-response agents: action sets, costs, classifiers and the solvers computing
# Delta(x; f) = x + argmax_a f(x + a) - c(a; x).
#
# Vectors are numpy arrays ordered by ActionSet.features. Classifiers and costs take
# that feature order explicitly so one object can serve several instances.

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from strategem.core.causal.functions import Tabular
from strategem.core.errors import (
    DimensionMismatch,
    EvaluationDomain,
    PreconditionFailed,
    ScenarioError,
    SolverMismatch,
    UnknownNode,
)
from strategem.core.simulation.presets import SolverSpec

MAX_GRID_POINTS = 2_000_000

CLOSED_FORM = "ClosedForm"
GRID = "Grid"


def as_vector(x, features) -> np.ndarray:
    """Mapping or sequence -> float vector in feature order."""
    if isinstance(x, Mapping):
        missing = [f for f in features if f not in x]
        if missing:
            raise DimensionMismatch(f"Feature values missing for {missing}")
        return np.array([float(x[f]) for f in features])
    vec = np.asarray(x, dtype=float)
    if vec.shape != (len(features),):
        raise DimensionMismatch(f"Expected {len(features)} feature values, got shape {vec.shape}")
    return vec


# ── Action sets ─────────────────────────────────────────────────────────────


class ActionKind(str, Enum):
    FULL_SPACE = "full_space"
    COORDINATE_LINE = "coordinate_line"
    FINITE_GRID = "finite_grid"


@dataclass(frozen=True)
class ActionSet:
    kind: ActionKind
    features: tuple[str, ...]
    axis: str | None = None
    points: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind is ActionKind.COORDINATE_LINE and self.axis not in self.features:
            raise UnknownNode(str(self.axis), "action set features")
        if self.kind is ActionKind.FINITE_GRID:
            if any(len(p) != len(self.features) for p in self.points):
                raise DimensionMismatch("Every finite-grid action needs one entry per feature")
            if not any(all(v == 0 for v in p) for p in self.points):
                raise PreconditionFailed("A finite action grid must contain the zero action")

    @classmethod
    def full_space(cls, features) -> "ActionSet":
        return cls(ActionKind.FULL_SPACE, tuple(features))

    @classmethod
    def coordinate_line(cls, features, axis: str) -> "ActionSet":
        return cls(ActionKind.COORDINATE_LINE, tuple(features), axis=axis)

    @classmethod
    def finite_grid(cls, features, points) -> "ActionSet":
        return cls(
            ActionKind.FINITE_GRID,
            tuple(features),
            points=tuple(tuple(float(v) for v in p) for p in points),
        )

    @property
    def dim(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int:
        if name not in self.features:
            raise UnknownNode(name, "action set features")
        return self.features.index(name)

    def contains(self, a) -> bool:
        a = as_vector(a, self.features)
        if self.kind is ActionKind.FULL_SPACE:
            return True
        if self.kind is ActionKind.COORDINATE_LINE:
            return bool(np.all(np.delete(a, self.index(self.axis)) == 0))
        return any(np.array_equal(a, np.asarray(p)) for p in self.points)


# ── Costs ───────────────────────────────────────────────────────────────────


class CostFunction:
    kind: str = ""

    def evaluate(self, actions, x, features) -> np.ndarray:
        """Cost of each row of actions (m, d) taken from x."""
        raise NotImplementedError

    def __call__(self, a, x, features) -> float:
        return float(self.evaluate(np.atleast_2d(a), x, features)[0])


@dataclass(frozen=True)
class Quadratic(CostFunction):
    """c(a; x) = 1/2 a^T C a with C symmetric positive definite."""

    matrix: tuple[tuple[float, ...], ...]
    kind = "quadratic"

    def __post_init__(self):
        C = self.C
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ScenarioError(f"Quadratic cost needs a square matrix, got shape {C.shape}")
        if not np.allclose(C, C.T):
            raise ScenarioError("Quadratic cost matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(C)) <= 0:
            raise ScenarioError("Quadratic cost matrix must be positive definite")

    @classmethod
    def of(cls, C) -> "Quadratic":
        return cls(tuple(tuple(float(v) for v in row) for row in np.asarray(C, dtype=float)))

    @property
    def C(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def scaled(self, factor: float) -> "Quadratic":
        return Quadratic.of(self.C * factor)

    def evaluate(self, actions, x, features):
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        C = self.C
        if C.shape[0] != len(features) or actions.shape[1] != len(features):
            raise DimensionMismatch(
                f"Quadratic cost is {C.shape[0]}-dimensional but there are {len(features)} features"
            )
        return 0.5 * np.einsum("ij,jk,ik->i", actions, C, actions)


@dataclass(frozen=True)
class GatedCoordinate(CostFunction):
    """Free on the allowed axis; any move elsewhere costs the full penalty (2B)."""

    axis: str
    penalty: float
    kind = "gated_coordinate"

    def evaluate(self, actions, x, features):
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if self.axis not in features:
            raise UnknownNode(self.axis, "cost features")
        off_axis = [k for k, name in enumerate(features) if name != self.axis]
        touched = np.any(actions[:, off_axis] != 0, axis=1)
        return self.penalty * touched.astype(float)


def cell_key(values, resolution: float = 1e-6) -> tuple[int, ...]:
    return tuple(int(v) for v in np.round(np.asarray(values, dtype=float) / resolution))


@dataclass(frozen=True)
class TabularOutcome(CostFunction):
    """Costs frozen on a finite set of (x-cell, action-cell) pairs."""

    table: dict = field(default_factory=dict)
    resolution: float = 1e-6
    kind = "tabular_outcome"

    def evaluate(self, actions, x, features):
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        row = self.table.get(cell_key(x, self.resolution))
        if row is None:
            raise EvaluationDomain(f"Tabulated cost has no entry for x={np.asarray(x).tolist()}")
        out = np.empty(len(actions))
        for k, a in enumerate(actions):
            key = cell_key(a, self.resolution)
            if key not in row:
                raise EvaluationDomain(f"Tabulated cost has no entry for action {a.tolist()}")
            out[k] = row[key]
        return out

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class ZeroCost(CostFunction):
    kind = "zero"

    def evaluate(self, actions, x, features):
        return np.zeros(len(np.atleast_2d(actions)))


# ── Classifiers ─────────────────────────────────────────────────────────────


class Classifier:
    kind: str = ""
    output_bound: float | None = None

    def reads(self) -> frozenset[str]:
        raise NotImplementedError

    def score(self, points: np.ndarray, features: list[str]) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, points, features) -> np.ndarray:
        """Classifier value of each row of points (m, d); clamped to [0, B] when bounded."""
        features = list(features)
        missing = self.reads() - set(features)
        if missing:
            raise DimensionMismatch(f"Classifier reads {sorted(missing)}, which are not features")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != len(features):
            raise DimensionMismatch(
                f"Points have {points.shape[1]} columns but there are {len(features)} features"
            )
        out = np.asarray(self.score(points, features), dtype=float)
        if self.output_bound is not None:
            out = np.clip(out, 0.0, self.output_bound)
        return out

    def __call__(self, x, features) -> float:
        return float(self.evaluate(np.atleast_2d(as_vector(x, features)), features)[0])


@dataclass(frozen=True)
class LinearScore(Classifier):
    weights: dict[str, float] = field(default_factory=dict)
    offset: float = 0.0
    output_bound: float | None = None
    kind = "linear_score"

    def reads(self):
        return frozenset(self.weights)

    def gradient(self, features) -> np.ndarray:
        return np.array([float(self.weights.get(f, 0.0)) for f in features])

    def score(self, points, features):
        return self.offset + points @ self.gradient(features)

    def __hash__(self):
        weights = tuple(sorted(self.weights.items()))
        return hash((self.kind, weights, self.offset, self.output_bound))


@dataclass(frozen=True)
class IndicatorMatch(Classifier):
    """
    f(x) = 1{|x_axis - h(view)| <= tolerance}, where view is x with every original
    coordinate in copy_of replaced by its copy. The agent cannot move copies without
    paying, so h keeps reading the pre-adaptation values.
    """

    axis: str = ""
    reference: Callable[[Mapping[str, float]], float] | None = None
    copy_of: dict[str, str] = field(default_factory=dict)
    tolerance: float = 0.0
    output_bound: float | None = None
    kind = "indicator_match"

    def reads(self):
        return frozenset({self.axis, *self.copy_of.values()})

    def view(self, row, features) -> dict[str, float]:
        values = dict(zip(features, (float(v) for v in row)))
        for original, copy in self.copy_of.items():
            values[original] = values[copy]
        return values

    def target(self, row, features) -> float:
        return float(self.reference(self.view(row, features)))

    def score(self, points, features):
        i = features.index(self.axis)
        out = np.empty(len(points))
        for k, row in enumerate(points):
            out[k] = 1.0 if abs(row[i] - self.target(row, features)) <= self.tolerance else 0.0
        return out

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class ConstantClassifier(Classifier):
    value: float = 0.0
    output_bound: float | None = None
    kind = "constant"

    def reads(self):
        return frozenset()

    def score(self, points, features):
        return np.full(len(points), self.value)


@dataclass(frozen=True)
class GridFunction(Classifier):
    """Tabulated classifier. Points outside the grid read the nearest boundary cell."""

    inputs: tuple[str, ...] = ()
    edges: tuple[tuple[float, ...], ...] = ()
    values: tuple = ()
    output_bound: float | None = None
    kind = "grid_function"

    def reads(self):
        return frozenset(self.inputs)

    def score(self, points, features):
        table = Tabular(self.inputs, self.edges, self.values)
        coords = {
            name: np.clip(points[:, features.index(name)], edges[0], edges[-1])
            for name, edges in zip(self.inputs, self.edges)
        }
        return np.broadcast_to(table.evaluate(coords), (len(points),))


# ── Solvers ─────────────────────────────────────────────────────────────────


@dataclass
class BestResponse:
    action: np.ndarray
    adapted: np.ndarray
    utility: float
    solver_tag: str

    def moved(self, features) -> dict[str, float]:
        """The intervention {i: x_i + a_i} over coordinates the agent actually changed."""
        return {f: float(self.adapted[k]) for k, f in enumerate(features) if self.action[k] != 0}


def utility(f: Classifier, c: CostFunction, x, a, features) -> float:
    """f(x + a) - c(a; x)."""
    features = list(features)
    x = as_vector(x, features)
    a = as_vector(a, features)
    score = f.evaluate((x + a)[None, :], features)[0]
    return float(score - c.evaluate(a[None, :], x, features)[0])


def _closed_form(f: Classifier, c: CostFunction, x: np.ndarray, actions: ActionSet) -> np.ndarray:
    features = list(actions.features)
    a = np.zeros(actions.dim)
    if isinstance(f, ConstantClassifier):
        return a

    if isinstance(f, LinearScore) and isinstance(c, Quadratic):
        if f.output_bound is not None:
            raise SolverMismatch(
                "ClosedForm for a linear score needs an unclamped classifier (output_bound=None)"
            )
        if actions.kind is ActionKind.FULL_SPACE:
            C = c.C
            if C.shape[0] != actions.dim:
                raise DimensionMismatch(
                    f"Quadratic cost is {C.shape[0]}-dimensional, action set is {actions.dim}"
                )
            return np.linalg.solve(C, f.gradient(features))
        if actions.kind is ActionKind.COORDINATE_LINE:
            i = actions.index(actions.axis)
            a[i] = f.gradient(features)[i] / c.C[i, i]
            return a

    if (
        isinstance(f, IndicatorMatch)
        and isinstance(c, GatedCoordinate)
        and f.axis == c.axis
        and (
            actions.kind is ActionKind.FULL_SPACE
            or (actions.kind is ActionKind.COORDINATE_LINE and actions.axis == c.axis)
        )
    ):
        if f.evaluate(x[None, :], features)[0] >= 1.0:
            return a
        i = actions.index(f.axis)
        a[i] = f.target(x, features) - x[i]
        return a

    raise SolverMismatch(
        f"No closed form for classifier {f.kind} with cost {c.kind} "
        f"over {actions.kind.value} actions"
    )


def grid_points(actions: ActionSet, solver: SolverSpec) -> np.ndarray:
    """Candidate actions: a centered hypercube (or line) of the given radius, zero included."""
    if actions.kind is ActionKind.FINITE_GRID:
        return np.asarray(actions.points, dtype=float)
    if not (solver.resolution > 0 and solver.radius > 0):
        raise SolverMismatch("Grid solver needs a positive resolution and a bounded radius")

    k = int(np.floor(solver.radius / solver.resolution + 1e-9))
    axis = np.round(np.arange(-k, k + 1) * solver.resolution, 12)
    d = actions.dim
    if actions.kind is ActionKind.COORDINATE_LINE:
        points = np.zeros((axis.size, d))
        points[:, actions.index(actions.axis)] = axis
        return points
    if axis.size**d > MAX_GRID_POINTS:
        raise SolverMismatch(
            f"Grid of {axis.size}^{d} points exceeds {MAX_GRID_POINTS}; "
            "coarsen the resolution or shrink the radius"
        )
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid(f: Classifier, c: CostFunction, x: np.ndarray, actions: ActionSet, solver) -> np.ndarray:
    features = list(actions.features)
    points = grid_points(actions, solver)
    utils = f.evaluate(x[None, :] + points, features) - c.evaluate(points, x, features)
    # best utility, then smallest norm, then lexicographic
    keys = tuple(points[:, k] for k in reversed(range(points.shape[1])))
    keys += (np.round(np.linalg.norm(points, axis=1), 12), -np.round(utils, 12))
    return points[np.lexsort(keys)[0]].copy()


def best_response(
    f: Classifier,
    c: CostFunction,
    x,
    actions: ActionSet,
    solver: SolverSpec | None = None,
) -> BestResponse:
    solver = solver or SolverSpec()
    features = list(actions.features)
    x = as_vector(x, features)
    if solver.kind == "closed_form":
        a, tag = _closed_form(f, c, x, actions), CLOSED_FORM
    elif solver.kind == "grid":
        a, tag = _grid(f, c, x, actions, solver), GRID
    else:
        raise SolverMismatch(f"Unknown solver: {solver.kind}. Available: closed_form, grid")

    gain = utility(f, c, x, a, features)
    idle = utility(f, c, x, np.zeros(actions.dim), features)
    if idle > gain:
        a, gain = np.zeros(actions.dim), idle
    return BestResponse(action=a, adapted=x + a, utility=gain, solver_tag=tag)


def is_epsilon_best_response(
    f: Classifier, c: CostFunction, x, a, eps: float, oracle_max: float, features
) -> bool:
    """f(x + a) - c(a; x) >= eps * max utility."""
    if not 0 < eps < 1:
        raise PreconditionFailed(f"eps must lie in (0, 1), got {eps}")
    return utility(f, c, x, a, features) >= eps * oracle_max
