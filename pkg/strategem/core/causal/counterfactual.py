# strategem/core/causal/counterfactual.py
#
# Counterfactual queries Z_{X_A:=x'}(E): abduct noise from an observed event, replace
# the intervened structural equations, predict. Abduction is exact for additive nodes;
# noise that the event leaves undetermined is sampled from its prior law.

import dataclasses
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from strategem.core.causal.functions import NOISE, Constant, Composition, PointMass, Product
from strategem.core.causal.scm_engine import Scm, node_value
from strategem.core.errors import (
    InconsistentEvent,
    NonAdditiveAbduction,
    PreconditionFailed,
    UnsupportedConditioning,
)
from strategem.core.simulation.monte_carlo import Estimate, rng_for, summarize


@dataclass(frozen=True)
class Intervention:
    targets: dict[str, float] = field(default_factory=dict)

    @property
    def is_null(self) -> bool:
        return not self.targets


@dataclass(frozen=True)
class ConditioningEvent:
    observed: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class AbductionResult:
    recovered: dict[str, float]
    free: frozenset[str]


@dataclass
class InterventionTable:
    """Target means under node:=v per candidate v, paired with the no-intervention baseline."""

    candidates: np.ndarray
    means: np.ndarray
    lift_std_errors: np.ndarray
    baseline: float
    n: int
    analytic: bool

    @property
    def lifts(self) -> np.ndarray:
        return self.means - self.baseline


def intervene(scm: Scm, iv: Intervention) -> Scm:
    """Graph surgery: each target becomes a constant with a point-mass noise."""
    for name in iv.targets:
        scm.check_node(name)
    equations = dict(scm.equations)
    noises = dict(scm.noises)
    composition = dict(scm.composition)
    for name, value in iv.targets.items():
        equations[name] = Constant(float(value))
        noises[name] = PointMass(0.0)
        composition[name] = Composition.ADDITIVE
    return dataclasses.replace(
        scm,
        dag=scm.dag.without_incoming(iv.targets),
        equations=equations,
        noises=noises,
        composition=composition,
    )


# ── Abduction ───────────────────────────────────────────────────────────────


def _close(a: float, b: float) -> bool:
    return bool(np.isclose(a, b, rtol=1e-9, atol=1e-9))


def _invert(scm: Scm, name: str, observed: Mapping, demanded: set) -> float | None:
    x = float(observed[name])
    eq = scm.equations[name]
    if scm.is_additive(name):
        u = x - float(eq.evaluate(observed))
    elif not eq.uses_noise():
        if not _close(x, float(eq.evaluate(observed))):
            raise InconsistentEvent(f"Observed {name}={x} contradicts its noise-free equation.")
        return None
    else:
        factor = eq.noise_factor(observed) if isinstance(eq, Product) else None
        if factor is not None and float(factor) == 0.0 and not _close(x, 0.0):
            raise InconsistentEvent(f"Observed {name}={x} but its noise multiplier is 0.")
        if factor is None or float(factor) == 0.0:
            if name in demanded:
                raise NonAdditiveAbduction(
                    f"Noise of embedded node {name} cannot be uniquely recovered from the event."
                )
            return None
        u = x / float(factor)

    law = scm.noises[name]
    if isinstance(law, PointMass) and not _close(u, law.value):
        raise InconsistentEvent(
            f"Observed {name}={x} implies noise {u}, but its law is a point mass at {law.value}."
        )
    return u


def abduce(
    scm: Scm,
    event: ConditioningEvent,
    query_node: str | None = None,
    demand: Iterable[str] | None = None,
) -> AbductionResult:
    """
    Recover u_j = x_j - g_j(pa_j) for every observed node whose parents are all
    observed. With query_node, only its ancestors-or-self must be recoverable;
    an explicit demand narrows that to the named nodes. Embedded nodes outside
    the demanded set fall back to free.
    """
    observed = event.observed
    for name in observed:
        scm.check_node(name)
    if demand is not None:
        demanded = set(demand)
    elif query_node is None:
        demanded = set(observed)
    else:
        scm.check_node(query_node)
        demanded = set(scm.dag.ancestors(query_node)) | {query_node}

    recovered: dict[str, float] = {}
    for name in scm.dag.order:
        if name not in observed or any(p not in observed for p in scm.dag.parents(name)):
            continue
        u = _invert(scm, name, observed, demanded)
        if u is not None:
            recovered[name] = u
    return AbductionResult(recovered=recovered, free=frozenset(scm.names) - recovered.keys())


# ── Prediction ──────────────────────────────────────────────────────────────


def _affine_in_noise(scm: Scm, name: str) -> bool:
    eq = scm.equations[name]
    if scm.is_additive(name) or not eq.uses_noise():
        return True
    return isinstance(eq, Product) and (eq.left == NOISE) != (eq.right == NOISE)


@dataclass
class _Plan:
    target: str
    relevant: tuple[str, ...]
    fixed: dict[str, float]
    recovered: dict[str, float]
    free: tuple[str, ...]
    analytic: bool


class _Query:
    """Shared abduction for several interventions against one event and target."""

    def __init__(self, scm: Scm, event: ConditioningEvent, target: str):
        scm.check_node(target)
        observed = event.observed
        for name in observed:
            scm.check_node(name)
            hidden = [p for p in scm.dag.parents(name) if p not in observed]
            if hidden:
                raise UnsupportedConditioning(
                    f"Conditioning on {name} with unobserved parent {hidden[0]} would distort "
                    "the law of free noise."
                )
        self.scm = scm
        self.event = event
        self.target = target
        upstream = scm.dag.ancestors(target)
        self.relevant = tuple(n for n in scm.dag.order if n == target or n in upstream)

    def plan(self, do_nodes: Iterable[str]) -> _Plan:
        scm = self.scm
        do_nodes = set(do_nodes)
        moved = scm.dag.descendants_of(do_nodes) if do_nodes else frozenset()
        # nodes not downstream of an intervention keep their observed values
        fixed = {
            n: self.event.observed[n]
            for n in self.relevant
            if n in self.event.observed and n not in moved
        }
        compute = [n for n in self.relevant if n not in fixed and n not in do_nodes]
        # only recomputed nodes need their noise back
        abduction = abduce(scm, self.event, demand=compute)
        free = tuple(
            sorted((n for n in compute if n in abduction.free), key=scm.dag.index.__getitem__)
        )
        analytic = not free or (free == (self.target,) and _affine_in_noise(scm, self.target))
        return _Plan(self.target, self.relevant, fixed, abduction.recovered, free, analytic)


def _evaluate(scm: Scm, plan: _Plan, do: Mapping, draws: Mapping):
    values: dict = {}
    for name in plan.relevant:
        if name in do:
            values[name] = do[name]
        elif name in plan.fixed:
            values[name] = plan.fixed[name]
        else:
            u = draws[name] if name in draws else plan.recovered[name]
            values[name] = node_value(scm, name, values, u)
    return values[plan.target]


def _mean_draws(scm: Scm, names: Iterable[str]) -> dict[str, float]:
    return {n: scm.noises[n].mean() for n in names}


def _draw(scm: Scm, names: Iterable[str], n: int, seed: int, key: tuple) -> dict:
    rng = rng_for(seed, *key)
    ordered = sorted(set(names), key=scm.dag.index.__getitem__)
    return {name: scm.noises[name].draw(rng, n) for name in ordered}


def counterfactual_value(
    scm: Scm, observed: Mapping[str, float], iv: Intervention, target: str
) -> float:
    """
    Deterministic counterfactual from a full observation. Nodes that are not
    downstream of the intervention are read back from the observation untouched.
    """
    scm.check_node(target)
    for name in iv.targets:
        scm.check_node(name)
    missing = [n for n in scm.names if n not in observed]
    if missing:
        raise PreconditionFailed(f"counterfactual_value needs a full assignment; missing {missing}")
    if target in iv.targets:
        return float(iv.targets[target])

    upstream = scm.dag.ancestors(target) | {target}
    moved = scm.dag.descendants_of(iv.targets) - iv.targets.keys()
    needs = [n for n in scm.dag.order if n in moved and n in upstream]
    if not needs:
        return float(observed[target])
    embedded = [n for n in needs if not scm.is_additive(n)]
    if embedded:
        raise NonAdditiveAbduction(
            f"Counterfactual for {target} must recompute embedded node {embedded[0]}; "
            "use expected_counterfactual instead."
        )

    recovered = abduce(scm, ConditioningEvent(dict(observed)), demand=needs).recovered
    values = {**observed, **iv.targets}
    for name in needs:
        values[name] = node_value(scm, name, values, recovered[name])
    return float(values[target])


def expected_counterfactual(
    scm: Scm,
    event: ConditioningEvent,
    iv: Intervention,
    target: str,
    n: int = 200,
    seed: int = 0,
    key: tuple = (),
    analytic: bool = True,
) -> Estimate:
    """
    E[target_{iv}(event)] with recovered noise fixed and free noise drawn from its
    prior. When the only free noise reaching the target is its own and enters
    affinely, the expectation is exact (std_error 0) unless analytic=False.
    """
    for name in iv.targets:
        scm.check_node(name)
    plan = _Query(scm, event, target).plan(iv.targets)
    if plan.analytic and (analytic or not plan.free):
        value = _evaluate(scm, plan, iv.targets, _mean_draws(scm, plan.free))
        return Estimate(float(value), 0.0, 0, analytic=True)

    draws = _draw(scm, plan.free, n, seed, key)
    values = np.broadcast_to(_evaluate(scm, plan, iv.targets, draws), (n,))
    return summarize(values)


def paired_effect(
    scm: Scm,
    event: ConditioningEvent,
    iv: Intervention,
    target: str,
    n: int = 200,
    seed: int = 0,
    key: tuple = (),
) -> Estimate:
    """
    E[target_{iv}(event) - target(event)] on common random numbers. A null
    intervention returns exactly 0.
    """
    for name in iv.targets:
        scm.check_node(name)
    if iv.is_null:
        scm.check_node(target)
        return Estimate(0.0, 0.0, 0, analytic=True)

    query = _Query(scm, event, target)
    moved, still = query.plan(iv.targets), query.plan(())
    if moved.analytic and still.analytic:
        means = _mean_draws(scm, set(moved.free) | set(still.free))
        diff = _evaluate(scm, moved, iv.targets, means) - _evaluate(scm, still, {}, means)
        return Estimate(float(diff) + 0.0, 0.0, 0, analytic=True)

    draws = _draw(scm, set(moved.free) | set(still.free), n, seed, key)
    diff = _evaluate(scm, moved, iv.targets, draws) - _evaluate(scm, still, {}, draws)
    return summarize(np.broadcast_to(diff, (n,)))


def intervention_means(
    scm: Scm,
    event: ConditioningEvent,
    node: str,
    candidates,
    target: str,
    n: int = 200,
    seed: int = 0,
    key: tuple = (),
) -> InterventionTable:
    """Vectorized E[target_{node:=v}(event)] over every candidate v, on shared draws."""
    scm.check_node(node)
    candidates = np.asarray(candidates, dtype=float)
    query = _Query(scm, event, target)
    moved, still = query.plan([node]), query.plan(())

    if moved.analytic and still.analytic:
        means_at = _mean_draws(scm, set(moved.free) | set(still.free))
        means = np.broadcast_to(
            _evaluate(scm, moved, {node: candidates}, means_at), candidates.shape
        ).astype(float)
        baseline = float(_evaluate(scm, still, {}, means_at))
        return InterventionTable(
            candidates, means, np.zeros_like(means), baseline, 0, analytic=True
        )

    draws = _draw(scm, set(moved.free) | set(still.free), n, seed, key)
    values = np.broadcast_to(
        _evaluate(scm, moved, {node: candidates[:, None]}, draws), (candidates.size, n)
    )
    base = np.broadcast_to(_evaluate(scm, still, {}, draws), (n,))
    lifts = values - base
    ses = np.std(lifts, axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(candidates.size)
    return InterventionTable(
        candidates, values.mean(axis=1), ses, float(base.mean()), n, analytic=False
    )


def label_event(
    scm: Scm, label: str, values: Mapping[str, float], features: Iterable[str]
) -> ConditioningEvent:
    """
    The observation x restricted to non-descendants of the label. For an additive
    label its own noise cancels out of outcome differences, so dropping
    descendants leaves I(f;x) and outcome deltas unchanged.
    """
    scm.check_node(label)
    downstream = scm.dag.descendants(label)
    features = list(features)
    dropped = [f for f in features if f in downstream]
    if dropped and not scm.is_additive(label):
        raise UnsupportedConditioning(
            f"Label {label} has embedded noise and observed descendants {dropped}; "
            "conditioning on them would distort its noise law."
        )
    return ConditioningEvent(
        {f: float(values[f]) for f in features if f not in downstream and f != label}
    )
