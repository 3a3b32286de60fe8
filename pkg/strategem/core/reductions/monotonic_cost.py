# strategem/core/reductions/monotonic_cost.py
#
# Outcome-monotonic costs c(a; x) = max(delta(x, a), 0), with
# delta = E[Y_{X:=x+a}({X=x})] - E[Y | X=x], and the two reductions that use them:
# orienting skeleton edges and reading off linear coefficient signs.

import threading
import zlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import norm

from strategem.config import logger
from strategem.core.causal.counterfactual import Intervention, label_event, paired_effect
from strategem.core.causal.functions import Linear
from strategem.core.causal.graph import CausalDag, Skeleton
from strategem.core.causal.scm_engine import Scm, sample_frame
from strategem.core.errors import AmbiguousSign, AssumptionViolated, PreconditionFailed
from strategem.core.reductions.incentive_design import (
    OracleRecord,
    OrientationResult,
    check_control_assumption,
    check_skeleton,
)
from strategem.core.simulation.monte_carlo import MonteCarloConfig, derive_seed
from strategem.core.simulation.presets import ControlGrid, ProbeConfig
from strategem.core.strategic.agent import (
    ActionKind,
    ActionSet,
    CostFunction,
    TabularOutcome,
    as_vector,
    cell_key,
)

CACHE_RESOLUTION = 1e-6
MESH = 21
COST = 22


@dataclass(frozen=True)
class OutcomeDelta:
    x: tuple[float, ...]
    a: tuple[float, ...]
    delta: float
    std_error: float


def outcome_delta(
    scm: Scm,
    label: str,
    x,
    a,
    features,
    mc: MonteCarloConfig | None = None,
    key: tuple = (),
) -> OutcomeDelta:
    """Counterfactual outcome change of taking action a from x; exactly 0 for a = 0."""
    mc = mc or MonteCarloConfig()
    features = list(features)
    xv, av = as_vector(x, features), as_vector(a, features)
    iv = Intervention({f: float(xv[k] + av[k]) for k, f in enumerate(features) if av[k] != 0})
    event = label_event(scm, label, dict(zip(features, xv)), features)
    est = paired_effect(scm, event, iv, label, mc.n_inner, mc.seed, key)
    return OutcomeDelta(tuple(xv.tolist()), tuple(av.tolist()), est.mean, est.std_error)


@dataclass(eq=False)
class MonotonicCost(CostFunction):
    """
    Lazy outcome-monotonic cost. A delta within z standard errors of zero (or not
    above atol) costs nothing. Every call counts as one oracle query.
    """

    scm: Scm
    label: str
    actions: ActionSet
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    z: float = 3.0
    atol: float = 1e-9
    evaluations: int = 0
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    kind = "outcome_monotonic"

    @property
    def features(self) -> tuple[str, ...]:
        return self.actions.features

    def delta(self, a, x) -> OutcomeDelta:
        a = as_vector(a, self.features)
        x = as_vector(x, self.features)
        if not self.actions.contains(a):
            raise PreconditionFailed(f"Action {a.tolist()} is outside the cost's action set")
        cache_key = (cell_key(x, CACHE_RESOLUTION), cell_key(a, CACHE_RESOLUTION))
        hit = self._cache.get(cache_key)
        if hit is None:
            stream = zlib.crc32(repr(cache_key).encode())
            hit = outcome_delta(
                self.scm, self.label, x, a, self.features, self.mc, key=(COST, stream)
            )
            # deterministic per key; concurrent writers store equal values
            self._cache[cache_key] = hit
        return hit

    def clamp(self, d: OutcomeDelta) -> float:
        return d.delta if d.delta > self.z * d.std_error + self.atol else 0.0

    def __call__(self, a, x, features=None) -> float:
        with self._lock:
            self.evaluations += 1
        return self.clamp(self.delta(a, x))

    def evaluate(self, actions, x, features):
        return np.array([self(a, x) for a in np.atleast_2d(np.asarray(actions, dtype=float))])

    def to_tabular(self, x_mesh, actions) -> TabularOutcome:
        """Freeze the cost on x_mesh x actions for use by the agent solvers."""
        table: dict = {}
        for x in np.atleast_2d(np.asarray(x_mesh, dtype=float)):
            row = table.setdefault(cell_key(x, CACHE_RESOLUTION), {})
            for a in np.atleast_2d(np.asarray(actions, dtype=float)):
                row[cell_key(a, CACHE_RESOLUTION)] = self(a, x)
        return TabularOutcome(table=table, resolution=CACHE_RESOLUTION)


def build_outcome_monotonic_cost(
    scm: Scm,
    label: str,
    actions: ActionSet,
    mc: MonteCarloConfig | None = None,
    z: float = 3.0,
) -> MonotonicCost:
    scm.check_node(label)
    for name in actions.features:
        scm.check_node(name)
    if label in actions.features:
        raise PreconditionFailed(f"Label {label} cannot also be a feature the agent acts on")
    return MonotonicCost(scm=scm, label=label, actions=actions, mc=mc or MonteCarloConfig(), z=z)


def bonferroni_z(probe: ProbeConfig) -> float:
    n_probes = probe.n_mesh * probe.n_alpha
    return max(probe.margin, float(norm.isf(probe.alpha / n_probes)))


def orient_edges_via_cost(
    skeleton: Skeleton,
    scm_truth: Scm,
    probe: ProbeConfig | None = None,
    verify_assumption: bool = False,
    grid: ControlGrid | None = None,
) -> OrientationResult:
    """
    One cost construction per edge {X_i, X_j}: label X_j, features X_{-j}, actions
    along e_i. Any significantly positive probe orients X_i -> X_j; a cost that is
    zero on every probe orients X_j -> X_i.
    """
    probe = probe or ProbeConfig()
    check_skeleton(skeleton, scm_truth)
    bound = scm_truth.bound
    alphas = np.linspace(-bound, bound, probe.n_alpha)
    z = bonferroni_z(probe)
    n_probes = probe.n_mesh * probe.n_alpha

    oriented, transcript = [], []
    for k, (i, j) in enumerate(skeleton.sorted_edges()):
        features = tuple(n for n in scm_truth.names if n != j)
        mc = MonteCarloConfig(n_inner=probe.n_inner, seed=derive_seed(probe.seed, COST, k))
        cost = build_outcome_monotonic_cost(
            scm_truth, j, ActionSet.coordinate_line(features, i), mc, z=z
        )
        mesh, _ = sample_frame(scm_truth, probe.n_mesh, derive_seed(probe.seed, MESH, k))
        axis = features.index(i)
        probe_max = 0.0
        for x in mesh[list(features)].to_numpy():
            for alpha in alphas:
                a = np.zeros(len(features))
                a[axis] = alpha
                probe_max = max(probe_max, cost(a, x))

        if probe_max > 0:
            check = check_control_assumption(scm_truth, (i, j), grid, (k,)) if verify_assumption else None
            if check is not None and not check.holds:
                raise AssumptionViolated(
                    f"Cost is positive along {i}->{j} but the control assumption fails there"
                )
            parent, child = i, j
        else:
            parent, child = j, i
        oriented.append((parent, child))
        transcript.append(
            OracleRecord(
                edge=(i, j),
                parent=parent,
                child=child,
                outcome="positive" if probe_max > 0 else "zero",
                probe_max=probe_max,
                n_probes=n_probes,
            )
        )
        logger.info(f"Edge {i}-{j}: max cost {probe_max:.4g} over {n_probes} probes")

    return OrientationResult(
        oriented=CausalDag(nodes=skeleton.nodes, edges=frozenset(oriented)),
        transcript=transcript,
    )


@dataclass(frozen=True)
class FeatureSign:
    causal: bool
    sign: int
    probe_plus: float
    probe_minus: float


@dataclass
class SignRecoveryResult:
    features: dict[str, FeatureSign]
    query_count: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "feature": name,
                    "causal": s.causal,
                    "sign": s.sign,
                    "probe_plus": s.probe_plus,
                    "probe_minus": s.probe_minus,
                }
                for name, s in self.features.items()
            ],
            columns=["feature", "causal", "sign", "probe_plus", "probe_minus"],
        )


def linear_sign_recovery(scm: Scm, cost: MonotonicCost) -> SignRecoveryResult:
    """Probe c(e_i; 0) and c(-e_i; 0) for every feature: two queries each."""
    equation = scm.equations[cost.label]
    if not isinstance(equation, Linear):
        raise PreconditionFailed(f"Label {cost.label} must have a linear equation")
    zero = sorted(p for p, w in equation.weights.items() if w == 0)
    if zero:
        raise PreconditionFailed(f"Label coefficients must be non-zero; {zero} have weight 0")
    if cost.actions.kind is not ActionKind.FULL_SPACE:
        raise PreconditionFailed("Sign recovery needs a cost over full-space actions")

    features = cost.features
    origin = np.zeros(len(features))
    start = cost.evaluations
    signs: dict[str, FeatureSign] = {}
    for k, name in enumerate(features):
        unit = np.zeros(len(features))
        unit[k] = 1.0
        plus, minus = cost(unit, origin), cost(-unit, origin)
        if plus > 0 and minus > 0:
            raise AmbiguousSign(
                f"Both c(e_{name}; 0)={plus:.4g} and c(-e_{name}; 0)={minus:.4g} are positive"
            )
        sign = 1 if plus > 0 else -1 if minus > 0 else 0
        signs[name] = FeatureSign(sign != 0, sign, plus, minus)
    return SignRecoveryResult(features=signs, query_count=cost.evaluations - start)
