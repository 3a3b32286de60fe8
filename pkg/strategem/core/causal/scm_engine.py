# strategem/core/causal/scm_engine.py
#
# Markovian structural causal models: one structural function and one independent
# noise law per node, evaluated in topological order.

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import pandas as pd

from strategem.config import logger
from strategem.core.causal.functions import (
    Composition,
    Gaussian,
    Linear,
    NoiseSpec,
    Product,
    StructuralFunction,
    equation_from_dict,
    noise_from_dict,
)
from strategem.core.causal.graph import CausalDag, NodeId
from strategem.core.errors import PreconditionFailed, ScenarioError, UnknownNode
from strategem.core.simulation.monte_carlo import chunk_streams, parallel_map

Assignment = dict[str, float]
NoiseAssignment = dict[str, float]


@dataclass(frozen=True, eq=False)
class Scm:
    dag: CausalDag
    equations: dict[str, StructuralFunction]
    noises: dict[str, NoiseSpec]
    composition: dict[str, Composition]
    support_bound: float | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return self.dag.names

    def check_node(self, name: str) -> str:
        if not self.dag.has_node(name):
            raise UnknownNode(name)
        return name

    def is_additive(self, name: str) -> bool:
        return self.composition[name] is Composition.ADDITIVE

    def is_anm(self) -> bool:
        return all(self.is_additive(n) for n in self.names)

    @property
    def bound(self) -> float:
        if self.support_bound is None:
            raise PreconditionFailed(
                "Model has no support_bound. Set it in the document or call ensure_support_bound()."
            )
        return self.support_bound

    def with_support_bound(self, bound: float) -> "Scm":
        return dataclasses.replace(self, support_bound=float(bound))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    node: str | None = None


@dataclass
class RandomAnmSpec:
    n_nodes: int
    edge_probability: float = 0.5
    weight_range: tuple[float, float] = (0.5, 2.0)
    seed: int = 0


# ── Validation ──────────────────────────────────────────────────────────────


def validate(scm: Scm) -> list[Violation]:
    """
    Return one violation per defect; an empty list means the model is well-formed.
    Defects are data here, never exceptions.
    """
    issues: list[Violation] = []
    names = [n.name for n in scm.dag.nodes]
    declared = set(names)

    if len(declared) != len(names):
        issues.append(Violation("DuplicateName", "Node names must be unique."))
    if sorted(n.index for n in scm.dag.nodes) != list(range(len(names))):
        issues.append(Violation("IndexGap", "Node indices must be dense 0..n-1."))

    dangling = sorted(e for e in scm.dag.edges if e[0] not in declared or e[1] not in declared)
    for parent, child in dangling:
        issues.append(
            Violation("UnknownNode", f"Edge {parent}->{child} references an undeclared node.")
        )
    if not dangling and not scm.dag.is_acyclic():
        issues.append(Violation("CycleDetected", "Causal graph contains a directed cycle."))

    for name in names:
        eq = scm.equations.get(name)
        noise = scm.noises.get(name)
        if eq is None:
            issues.append(Violation("MissingEquation", f"No structural equation for {name}.", name))
        else:
            parents = {p for p, c in scm.dag.edges if c == name}
            for ref in sorted(eq.inputs() - parents):
                issues.append(
                    Violation(
                        "UndeclaredParent",
                        f"Equation of {name} references {ref}, which is not a parent.",
                        name,
                    )
                )
            if eq.uses_noise() and scm.composition.get(name) is not Composition.EMBEDDED:
                issues.append(
                    Violation(
                        "NoiseInAdditive",
                        f"{name} reads its own noise inside the equation but is marked additive.",
                        name,
                    )
                )
            for problem in getattr(eq, "problems", lambda: [])():
                issues.append(Violation("MalformedEquation", f"{name}: {problem}", name))
        if noise is None:
            issues.append(Violation("MissingNoise", f"No noise law for {name}.", name))
        else:
            for problem in noise.problems():
                issues.append(Violation("MalformedNoise", f"{name}: {problem}", name))
        if name not in scm.composition:
            issues.append(Violation("MissingComposition", f"No composition flag for {name}.", name))

    if scm.support_bound is not None and not scm.support_bound > 0:
        issues.append(
            Violation("InvalidSupportBound", f"support_bound must be > 0, got {scm.support_bound}")
        )
    return issues


def validate_or_raise(scm: Scm) -> Scm:
    issues = validate(scm)
    if issues:
        listing = "; ".join(f"[{v.code}] {v.message}" for v in issues)
        raise ScenarioError(f"Invalid model: {listing}")
    return scm


# ── Evaluation ──────────────────────────────────────────────────────────────


def node_value(scm: Scm, name: str, values: Mapping, noise):
    eq = scm.equations[name]
    if scm.is_additive(name):
        return eq.evaluate(values) + noise
    return eq.evaluate(values, noise)


def propagate(
    scm: Scm,
    noise: Mapping,
    *,
    do: Mapping | None = None,
    fixed: Mapping | None = None,
) -> dict:
    """
    Evaluate every node in topological order. `do` replaces a node's equation by a
    value; `fixed` holds a node at a given value without surgery semantics (used
    for observed nodes the caller knows are unaffected). Works on scalars or arrays.
    """
    do = do or {}
    fixed = fixed or {}
    values: dict = {}
    for name in scm.dag.order:
        if name in do:
            values[name] = do[name]
        elif name in fixed:
            values[name] = fixed[name]
        else:
            values[name] = node_value(scm, name, values, noise[name])
    return values


def forward_eval(scm: Scm, noise: Mapping[str, float]) -> Assignment:
    missing = [n for n in scm.names if n not in noise]
    if missing:
        raise PreconditionFailed(f"Noise assignment does not cover nodes: {missing}")
    for name in noise:
        scm.check_node(name)
    return {name: float(v) for name, v in propagate(scm, noise).items()}


def _sample_chunk(scm: Scm, stream) -> tuple[dict, dict]:
    rng, size = stream
    noise = {name: scm.noises[name].draw(rng, size) for name in scm.names}
    values = propagate(scm, noise)
    return {n: np.broadcast_to(values[n], (size,)) for n in scm.names}, noise


def sample_frame(
    scm: Scm, n: int, seed: int, threads: int | None = None
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    n i.i.d. draws as (values, noise) frames with one column per node in index order.
    Streams are derived per fixed-size chunk, so the output is independent of threads.
    """
    if n < 1:
        raise PreconditionFailed(f"Sample size must be >= 1, got {n}")
    chunks = parallel_map(lambda s: _sample_chunk(scm, s), chunk_streams(seed, n), threads)
    values = pd.DataFrame(
        {name: np.concatenate([c[0][name] for c in chunks]) for name in scm.names}
    )
    noise = pd.DataFrame({name: np.concatenate([c[1][name] for c in chunks]) for name in scm.names})
    return values, noise


def sample(scm: Scm, n: int, seed: int) -> list[tuple[Assignment, NoiseAssignment]]:
    """
    Draw n individuals. Ground-truth noise is returned for test oracles only;
    estimators work from the endogenous values.
    """
    values, noise = sample_frame(scm, n, seed)
    return list(zip(values.to_dict("records"), noise.to_dict("records")))


def analytic_means(scm: Scm) -> dict[str, float] | None:
    """Exact node means when every equation is affine in its parents, else None."""
    for name in scm.names:
        eq = scm.equations[name]
        if isinstance(eq, Product) or not eq.is_affine():
            return None
    means = {name: scm.noises[name].mean() for name in scm.names}
    return {name: float(v) for name, v in propagate(scm, means).items()}


def estimate_support_bound(scm: Scm, seed: int = 0, n_probe: int = 10_000) -> float:
    """1.5 x the largest |x| seen over n_probe seeded draws."""
    values, _ = sample_frame(scm, n_probe, seed)
    bound = 1.5 * float(np.max(np.abs(values.to_numpy())))
    return bound if bound > 0 else 1.0


def ensure_support_bound(scm: Scm, seed: int = 0) -> Scm:
    if scm.support_bound is not None:
        return scm
    bound = estimate_support_bound(scm, seed)
    logger.debug(f"Estimated support bound B={bound:.4f} from probe samples")
    return scm.with_support_bound(bound)


# ── Construction ────────────────────────────────────────────────────────────


def build_scm(
    names: list[str],
    equations: dict[str, StructuralFunction],
    noises: dict[str, NoiseSpec],
    composition: dict[str, Composition | str] | None = None,
    support_bound: float | None = None,
    extra_edges=(),
) -> Scm:
    """Edges are derived from the parents each equation references."""
    edges = {(p, name) for name, eq in equations.items() for p in eq.inputs()}
    edges |= set(extra_edges)
    composition = composition or {}
    return Scm(
        dag=CausalDag.from_names(list(names), edges),
        equations=dict(equations),
        noises=dict(noises),
        composition={
            n: Composition(composition.get(n, Composition.ADDITIVE)) for n in names
        },
        support_bound=support_bound,
    )


def random_anm(spec: RandomAnmSpec) -> Scm:
    """
    Linear-Gaussian ANM over a random topological order. Weights have magnitude in
    weight_range and a random sign, so they stay away from zero.
    """
    lo, hi = spec.weight_range
    if spec.n_nodes < 2:
        raise PreconditionFailed(f"random_anm needs n_nodes >= 2, got {spec.n_nodes}")
    if not 0 < lo <= hi:
        raise PreconditionFailed(f"weight_range must satisfy 0 < lo <= hi, got {spec.weight_range}")

    rng = np.random.default_rng(spec.seed)
    names = [f"X{i}" for i in range(spec.n_nodes)]
    order = rng.permutation(spec.n_nodes)
    weights: dict[str, dict[str, float]] = {name: {} for name in names}
    for a in range(spec.n_nodes):
        for b in range(a + 1, spec.n_nodes):
            if rng.random() < spec.edge_probability:
                parent, child = names[order[a]], names[order[b]]
                weights[child][parent] = float(rng.uniform(lo, hi) * rng.choice([-1.0, 1.0]))

    scm = build_scm(
        names,
        {name: Linear(weights[name]) for name in names},
        {name: Gaussian(0.0, 1.0) for name in names},
    )
    return ensure_support_bound(scm, seed=spec.seed)


# ── JSON documents ──────────────────────────────────────────────────────────


def scm_from_dict(doc: dict) -> Scm:
    """
    Parse {"nodes": [...], "edges": [[p, c], ...], "support_bound": B}. Node order in
    the document fixes the index assignment.
    """
    try:
        node_docs = doc["nodes"]
        names = [str(n["name"]) for n in node_docs]
        equations = {str(n["name"]): equation_from_dict(n["equation"]) for n in node_docs}
        noises = {str(n["name"]): noise_from_dict(n["noise"]) for n in node_docs}
        composition = {
            str(n["name"]): Composition(n.get("composition", "additive")) for n in node_docs
        }
        edges = [(str(p), str(c)) for p, c in doc.get("edges", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"Malformed model document: {e!r}") from e

    bound = doc.get("support_bound")
    return Scm(
        dag=CausalDag(
            nodes=tuple(NodeId(i, n) for i, n in enumerate(names)), edges=frozenset(edges)
        ),
        equations=equations,
        noises=noises,
        composition=composition,
        support_bound=float(bound) if bound is not None else None,
    )


def scm_to_dict(scm: Scm) -> dict:
    doc = {
        "nodes": [
            {
                "name": name,
                "noise": scm.noises[name].to_dict(),
                "equation": scm.equations[name].to_dict(),
                "composition": scm.composition[name].value,
            }
            for name in scm.names
        ],
        "edges": [
            list(e)
            for e in sorted(scm.dag.edges, key=lambda e: (scm.dag.index[e[0]], scm.dag.index[e[1]]))
        ],
    }
    if scm.support_bound is not None:
        doc["support_bound"] = scm.support_bound
    return doc
