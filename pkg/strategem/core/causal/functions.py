# strategem/core/causal/functions.py
#
# Closed library of exogenous noise laws and structural functions. Everything here
# evaluates on numpy arrays (or scalars) so the same code serves single
# counterfactual queries and vectorized sampling.

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from strategem.core.errors import EvaluationDomain, ScenarioError

NOISE = "noise"  # token a Product input uses to reference the node's own noise term


class Composition(str, Enum):
    ADDITIVE = "additive"
    EMBEDDED = "embedded"


# ── Noise laws ──────────────────────────────────────────────────────────────


class NoiseSpec:
    law: str = ""

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def std(self) -> float:
        raise NotImplementedError

    def problems(self) -> list[str]:
        return []

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(NoiseSpec):
    mu: float = 0.0
    stddev: float = 1.0
    law = "gaussian"

    def draw(self, rng, size):
        return rng.normal(self.mu, self.stddev, size)

    def mean(self):
        return self.mu

    def std(self):
        return self.stddev

    def problems(self):
        return [] if self.stddev > 0 else [f"Gaussian stddev must be > 0, got {self.stddev}"]

    def to_dict(self):
        return {"law": self.law, "mean": self.mu, "stddev": self.stddev}


@dataclass(frozen=True)
class Uniform(NoiseSpec):
    lo: float = -1.0
    hi: float = 1.0
    law = "uniform"

    def draw(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def std(self):
        return (self.hi - self.lo) / np.sqrt(12.0)

    def problems(self):
        return [] if self.lo < self.hi else [f"Uniform needs lo < hi, got [{self.lo}, {self.hi}]"]

    def to_dict(self):
        return {"law": self.law, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Rademacher(NoiseSpec):
    law = "rademacher"

    def draw(self, rng, size):
        return rng.choice(np.array([-1.0, 1.0]), size=size)

    def mean(self):
        return 0.0

    def std(self):
        return 1.0

    def to_dict(self):
        return {"law": self.law}


@dataclass(frozen=True)
class PointMass(NoiseSpec):
    value: float = 0.0
    law = "point_mass"

    def draw(self, rng, size):
        return np.full(size, self.value, dtype=float)

    def mean(self):
        return self.value

    def std(self):
        return 0.0

    def to_dict(self):
        return {"law": self.law, "value": self.value}


def noise_from_dict(doc: dict) -> NoiseSpec:
    law = doc.get("law")
    try:
        if law == "gaussian":
            return Gaussian(float(doc.get("mean", 0.0)), float(doc.get("stddev", 1.0)))
        if law == "uniform":
            return Uniform(float(doc["lo"]), float(doc["hi"]))
        if law == "rademacher":
            return Rademacher()
        if law == "point_mass":
            return PointMass(float(doc.get("value", 0.0)))
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"Malformed noise spec {doc!r}: {e}") from e
    raise ScenarioError(
        f"Unknown noise law: {law!r}. Available: gaussian, uniform, rademacher, point_mass"
    )


# ── Structural functions ────────────────────────────────────────────────────


class StructuralFunction:
    kind: str = ""

    def inputs(self) -> frozenset[str]:
        """Parent names referenced by the function."""
        raise NotImplementedError

    def uses_noise(self) -> bool:
        return False

    def evaluate(self, values, noise=0.0):
        raise NotImplementedError

    def is_affine(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(StructuralFunction):
    value: float = 0.0
    kind = "constant"

    def inputs(self):
        return frozenset()

    def evaluate(self, values, noise=0.0):
        return self.value + 0.0 * np.asarray(noise, dtype=float)

    def is_affine(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class Linear(StructuralFunction):
    weights: dict[str, float] = field(default_factory=dict)
    offset: float = 0.0
    kind = "linear"

    def inputs(self):
        return frozenset(self.weights)

    def evaluate(self, values, noise=0.0):
        total = self.offset + 0.0 * np.asarray(noise, dtype=float)
        for parent, w in self.weights.items():
            total = total + w * values[parent]
        return total

    def is_affine(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "weights": dict(self.weights), "offset": self.offset}

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.weights.items())), self.offset))


@dataclass(frozen=True)
class Monomial:
    coefficient: float
    powers: dict[str, int] = field(default_factory=dict)

    def __hash__(self):
        return hash((self.coefficient, tuple(sorted(self.powers.items()))))


@dataclass(frozen=True)
class Polynomial(StructuralFunction):
    terms: tuple[Monomial, ...] = ()
    kind = "polynomial"

    def inputs(self):
        return frozenset(p for term in self.terms for p in term.powers)

    def evaluate(self, values, noise=0.0):
        total = 0.0 * np.asarray(noise, dtype=float)
        for term in self.terms:
            part = term.coefficient
            for parent, power in term.powers.items():
                part = part * np.power(values[parent], power)
            total = total + part
        return total

    def is_affine(self):
        return all(sum(t.powers.values()) <= 1 for t in self.terms)

    def to_dict(self):
        return {
            "kind": self.kind,
            "terms": [{"coefficient": t.coefficient, "powers": dict(t.powers)} for t in self.terms],
        }


@dataclass(frozen=True)
class Product(StructuralFunction):
    """coefficient * left * right, where an input is a parent or the node's own noise."""

    left: str
    right: str
    coefficient: float = 1.0
    kind = "product"

    def inputs(self):
        return frozenset(i for i in (self.left, self.right) if i != NOISE)

    def uses_noise(self):
        return NOISE in (self.left, self.right)

    def noise_factor(self, values):
        """The multiplier of the noise term when exactly one input is the noise."""
        if (self.left == NOISE) == (self.right == NOISE):
            return None
        other = self.right if self.left == NOISE else self.left
        return self.coefficient * np.asarray(values[other], dtype=float)

    def evaluate(self, values, noise=0.0):
        def read(token):
            return np.asarray(noise, dtype=float) if token == NOISE else values[token]

        return self.coefficient * read(self.left) * read(self.right)

    def to_dict(self):
        return {
            "kind": self.kind,
            "inputs": [self.left, self.right],
            "coefficient": self.coefficient,
        }


@dataclass(frozen=True)
class Tabular(StructuralFunction):
    """Piecewise-constant table over a grid of parent bins (edges per parent)."""

    parents: tuple[str, ...]
    edges: tuple[tuple[float, ...], ...]
    values: tuple = ()
    kind = "tabular"

    def inputs(self):
        return frozenset(self.parents)

    def _table(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def evaluate(self, values, noise=0.0):
        table = self._table()
        index = []
        for parent, edges in zip(self.parents, self.edges):
            v = np.asarray(values[parent], dtype=float)
            if np.any(v < edges[0]) or np.any(v > edges[-1]):
                raise EvaluationDomain(
                    f"Tabular function probed at {parent}={v} "
                    f"outside grid [{edges[0]}, {edges[-1]}]"
                )
            cell = np.searchsorted(np.asarray(edges), v, side="right") - 1
            index.append(np.clip(cell, 0, len(edges) - 2))
        out = table[tuple(index)] if index else table
        return out + 0.0 * np.asarray(noise, dtype=float)

    def problems(self) -> list[str]:
        table = self._table()
        issues = []
        if len(self.parents) != len(self.edges):
            issues.append("Tabular needs one edge list per parent")
        elif table.shape != tuple(len(e) - 1 for e in self.edges):
            issues.append(
                f"Tabular values shape {table.shape} does not match grid "
                f"{tuple(len(e) - 1 for e in self.edges)}"
            )
        for edges in self.edges:
            if any(b <= a for a, b in zip(edges, edges[1:])):
                issues.append("Tabular edges must be strictly increasing")
        return issues

    def to_dict(self):
        return {
            "kind": self.kind,
            "parents": list(self.parents),
            "edges": [list(e) for e in self.edges],
            "values": self._table().tolist(),
        }


def _freeze(nested):
    if isinstance(nested, list | tuple):
        return tuple(_freeze(v) for v in nested)
    return float(nested)


def equation_from_dict(doc: dict) -> StructuralFunction:
    kind = doc.get("kind")
    try:
        if kind == "constant":
            return Constant(float(doc.get("value", 0.0)))
        if kind == "linear":
            return Linear(
                {str(k): float(v) for k, v in doc.get("weights", {}).items()},
                float(doc.get("offset", 0.0)),
            )
        if kind == "polynomial":
            return Polynomial(
                tuple(
                    Monomial(
                        float(t.get("coefficient", 1.0)),
                        {str(k): int(v) for k, v in t.get("powers", {}).items()},
                    )
                    for t in doc.get("terms", [])
                )
            )
        if kind == "product":
            left, right = doc["inputs"]
            return Product(str(left), str(right), float(doc.get("coefficient", 1.0)))
        if kind == "tabular":
            return Tabular(
                tuple(doc["parents"]),
                tuple(tuple(float(b) for b in e) for e in doc["edges"]),
                _freeze(doc["values"]),
            )
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"Malformed equation spec {doc!r}: {e}") from e
    raise ScenarioError(
        f"Unknown equation kind: {kind!r}. "
        "Available: constant, linear, polynomial, product, tabular"
    )
