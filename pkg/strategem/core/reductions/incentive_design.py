# strategem/core/reductions/incentive_design.py
#
# The good-incentives problem and its use as a causal-discovery oracle.
#
# For an edge V - W the control function h maps the recovered noise of W's ancestors
# (those reaching W other than through V) to the intervention value on V that
# maximizes E[W]. If such an h lifts E[W], the indicator classifier
# f = 1{x_V = h(copy features)} incentivizes improvement under a cost that only lets
# the agent move V, so the oracle answers Classifier exactly on causal edges.

import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from strategem.config import logger
from strategem.core.causal.counterfactual import ConditioningEvent, abduce, intervention_means
from strategem.core.causal.functions import Composition, Linear, PointMass
from strategem.core.causal.graph import CausalDag, Skeleton, skeleton_of
from strategem.core.causal.scm_engine import Scm, sample_frame
from strategem.core.errors import (
    AssumptionViolated,
    BudgetExhausted,
    NonAdditiveAbduction,
    PreconditionFailed,
)
from strategem.core.simulation.monte_carlo import (
    Estimate,
    MonteCarloConfig,
    derive_seed,
    summarize,
)
from strategem.core.simulation.presets import ControlGrid, SearchFamily, SolverSpec
from strategem.core.strategic.agent import (
    ActionSet,
    Classifier,
    CostFunction,
    GatedCoordinate,
    IndicatorMatch,
    LinearScore,
)
from strategem.core.strategic.improvement import (
    ImprovementEstimate,
    Verdict,
    population_improvement,
)

MESH = 11
CONTROL = 12
CERTIFY = 13


class Outcome(str, Enum):
    CLASSIFIER = "Classifier"
    FAIL = "Fail"


@dataclass
class ControlFunction:
    """
    h(u_A) tabulated over cells of the recovered ancestor noise. Calling it on a
    feature mapping abducts u_A first, so it can be used directly as a classifier
    reference.
    """

    edge: tuple[str, str]
    scm: Scm = field(repr=False)
    ancestors: tuple[str, ...]
    candidates: np.ndarray = field(repr=False)
    table: dict[tuple[int, ...], float]
    default: float
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    cells_per_dim: int
    lift: Estimate

    @property
    def spacing(self) -> float:
        return float(self.candidates[1] - self.candidates[0]) if self.candidates.size > 1 else 0.0

    def cell(self, u) -> tuple[int, ...]:
        u = np.asarray(u, dtype=float)
        width = self.hi - self.lo
        scaled = np.where(width > 0, (u - self.lo) / np.where(width > 0, width, 1.0), 0.0)
        index = np.clip(np.floor(scaled * self.cells_per_dim), 0, self.cells_per_dim - 1)
        return tuple(int(i) for i in index)

    def noise_of(self, values: Mapping[str, float]) -> np.ndarray:
        needed = set(self.ancestors)
        for name in self.ancestors:
            needed.update(self.scm.dag.parents(name))
        observed = {n: float(values[n]) for n in needed if n in values}
        recovered = abduce(self.scm, ConditioningEvent(observed)).recovered
        missing = [a for a in self.ancestors if a not in recovered]
        if missing:
            raise NonAdditiveAbduction(f"Cannot recover the noise of {missing} from the features")
        return np.array([recovered[a] for a in self.ancestors])

    def __call__(self, values: Mapping[str, float]) -> float:
        return self.table.get(self.cell(self.noise_of(values)), self.default)


@dataclass(frozen=True)
class AssumptionCheck:
    edge: tuple[str, str]
    holds: bool
    lift: Estimate | None
    witness: ControlFunction | None = None


@dataclass
class GoodIncentivesInstance:
    scm: Scm
    label: str
    cost: CostFunction
    actions: ActionSet
    eps: float
    copy_of: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.scm.check_node(self.label)
        if not 0 < self.eps < 1:
            raise PreconditionFailed(f"eps must lie in (0, 1), got {self.eps}")

    @property
    def features(self) -> tuple[str, ...]:
        return self.actions.features


@dataclass
class OracleAnswer:
    outcome: Outcome
    classifier: Classifier | None = None
    certificate: ImprovementEstimate | None = None
    witness: ControlFunction | None = None

    def __post_init__(self):
        if self.outcome is Outcome.CLASSIFIER and (
            self.certificate is None or self.certificate.verdict is not Verdict.IMPROVEMENT
        ):
            raise PreconditionFailed("A Classifier answer needs a passing improvement certificate")


@dataclass
class Constructive:
    grid: ControlGrid = field(default_factory=ControlGrid)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)


@dataclass
class Search:
    family: SearchFamily = field(default_factory=SearchFamily)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    solver: SolverSpec = field(default_factory=lambda: SolverSpec.grid(0.5, 1.0))


@dataclass(frozen=True)
class OracleRecord:
    edge: tuple[str, str]
    parent: str
    child: str
    outcome: str
    certificate: ImprovementEstimate | None = None
    probe_max: float | None = None
    n_probes: int = 0
    n_calls: int = 1
    statistical_oracle: bool = True


@dataclass
class OrientationResult:
    oriented: CausalDag
    transcript: list[OracleRecord]

    @property
    def n_calls(self) -> int:
        return sum(r.n_calls for r in self.transcript)

    def matches(self, dag: CausalDag) -> bool:
        return self.oriented.edges == dag.edges

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "edge": f"{r.edge[0]}-{r.edge[1]}",
                    "direction": f"{r.parent}->{r.child}",
                    "oracle_outcome": r.outcome,
                    "certificate_point": r.certificate.point if r.certificate else np.nan,
                    "certificate_se": r.certificate.std_error if r.certificate else np.nan,
                    "probe_max": np.nan if r.probe_max is None else r.probe_max,
                    "n_probes": r.n_probes,
                    "n_calls": r.n_calls,
                    "statistical_oracle": r.statistical_oracle,
                }
                for r in self.transcript
            ],
            columns=[
                "edge",
                "direction",
                "oracle_outcome",
                "certificate_point",
                "certificate_se",
                "probe_max",
                "n_probes",
                "n_calls",
                "statistical_oracle",
            ],
        )


# ── Control functions ───────────────────────────────────────────────────────


def construct_control_function(
    scm: Scm, edge: tuple[str, str], grid: ControlGrid | None = None, key: tuple = ()
) -> ControlFunction | None:
    """
    Fit h on a mesh of x_{-w} draws: recover u_A, estimate E[W_{V:=v}(x_{-w})] for
    every candidate v, keep the argmax per u_A cell. Returns None unless the mean
    lift over the paired baseline E[W | x_{-w}] clears grid.margin standard errors.
    """
    grid = grid or ControlGrid()
    v_node, w_node = edge
    scm.check_node(v_node)
    scm.check_node(w_node)
    bound = scm.bound
    candidates = np.linspace(-bound, bound, grid.n_candidates)

    index = scm.dag.index
    ancestors = tuple(sorted(scm.dag.ancestors_avoiding(w_node, v_node), key=index.__getitem__))
    embedded = [a for a in ancestors if scm.composition[a] is not Composition.ADDITIVE]
    if embedded:
        raise NonAdditiveAbduction(
            f"Ancestor {embedded[0]} of {w_node} has embedded noise; u_A is not recoverable"
        )

    downstream = scm.dag.descendants_of([w_node])
    observable = [n for n in scm.names if n not in downstream]
    mesh, _ = sample_frame(scm, grid.n_mesh, derive_seed(grid.seed, MESH, *key))
    rows = mesh[observable].to_numpy()

    means = np.empty((len(rows), candidates.size))
    baseline = np.empty(len(rows))
    noise = np.empty((len(rows), len(ancestors)))
    for m, row in enumerate(rows):
        event = ConditioningEvent(dict(zip(observable, (float(v) for v in row))))
        table = intervention_means(
            scm, event, v_node, candidates, w_node, grid.n_inner, grid.seed, (CONTROL, *key, m)
        )
        means[m], baseline[m] = table.means, table.baseline
        recovered = abduce(scm, event, query_node=w_node).recovered
        noise[m] = [recovered[a] for a in ancestors]

    lo = noise.min(axis=0) if ancestors else np.zeros(0)
    hi = noise.max(axis=0) if ancestors else np.zeros(0)
    control = ControlFunction(
        edge=edge,
        scm=scm,
        ancestors=ancestors,
        candidates=candidates,
        table={},
        default=float(candidates[int(np.argmax(means.mean(axis=0)))]),
        lo=lo,
        hi=hi,
        cells_per_dim=grid.cells_per_dim,
        lift=Estimate(0.0, 0.0, 0),
    )

    cells = [control.cell(u) for u in noise]
    members: dict[tuple[int, ...], list[int]] = {}
    for m, cell in enumerate(cells):
        members.setdefault(cell, []).append(m)
    best = {cell: int(np.argmax(means[rows_].mean(axis=0))) for cell, rows_ in members.items()}
    control.table = {cell: float(candidates[k]) for cell, k in best.items()}

    lifts = np.array([means[m, best[cells[m]]] - baseline[m] for m in range(len(rows))])
    control.lift = summarize(lifts)
    if not control.lift.mean - grid.margin * control.lift.std_error > 0:
        logger.debug(
            f"No control function for {v_node}->{w_node}: lift {control.lift.mean:.4g} "
            f"(se {control.lift.std_error:.3g})"
        )
        return None
    return control


def check_control_assumption(
    scm: Scm, edge: tuple[str, str], grid: ControlGrid | None = None, key: tuple = ()
) -> AssumptionCheck:
    witness = construct_control_function(scm, edge, grid, key)
    return AssumptionCheck(
        edge=edge,
        holds=witness is not None,
        lift=None if witness is None else witness.lift,
        witness=witness,
    )


def assumption_report(scm: Scm, grid: ControlGrid | None = None) -> pd.DataFrame:
    """Check the control assumption on every true edge and on its reversal."""
    rows = []
    edges = sorted(scm.dag.edges, key=lambda e: (scm.dag.index[e[0]], scm.dag.index[e[1]]))
    for k, (parent, child) in enumerate(edges):
        for direction, edge in (("causal", (parent, child)), ("reversed", (child, parent))):
            cf = construct_control_function(scm, edge, grid, (k, int(direction == "reversed")))
            rows.append(
                {
                    "edge": f"{edge[0]}->{edge[1]}",
                    "direction": direction,
                    "holds": cf is not None,
                    "lift": cf.lift.mean if cf else np.nan,
                    "lift_se": cf.lift.std_error if cf else np.nan,
                }
            )
    return pd.DataFrame(rows, columns=["edge", "direction", "holds", "lift", "lift_se"])


# ── Oracle ──────────────────────────────────────────────────────────────────


def build_augmented_instance(
    scm: Scm, edge: tuple[str, str], eps: float = 0.5
) -> GoodIncentivesInstance:
    """
    Label X_j, features (X_{-j}, copy of X_i) where the copy := X_i, and a cost that
    charges 2B for moving anything except X_i.
    """
    i, j = edge
    scm.check_node(i)
    scm.check_node(j)
    if not (scm.dag.has_edge(i, j) or scm.dag.has_edge(j, i)):
        raise PreconditionFailed(f"{i} - {j} is not an edge of the model's skeleton")
    bound = scm.bound

    copy = f"{i}_copy"
    while scm.dag.has_node(copy):
        copy += "_"
    augmented = Scm(
        dag=scm.dag.with_node(copy, parents=[i]),
        equations={**scm.equations, copy: Linear({i: 1.0})},
        noises={**scm.noises, copy: PointMass(0.0)},
        composition={**scm.composition, copy: Composition.ADDITIVE},
        support_bound=bound,
    )
    features = tuple(n for n in augmented.names if n != j)
    return GoodIncentivesInstance(
        scm=augmented,
        label=j,
        cost=GatedCoordinate(axis=i, penalty=2.0 * bound),
        actions=ActionSet.full_space(features),
        eps=eps,
        copy_of={i: copy},
    )


def _constructive(inst: GoodIncentivesInstance, strategy: Constructive, key: tuple):
    if not isinstance(inst.cost, GatedCoordinate):
        logger.warning(f"Constructive oracle needs a gated cost, got {inst.cost.kind}; Fail")
        return OracleAnswer(Outcome.FAIL)
    axis = inst.cost.axis
    witness = construct_control_function(inst.scm, (axis, inst.label), strategy.grid, key)
    if witness is None:
        return OracleAnswer(Outcome.FAIL)

    f = IndicatorMatch(
        axis=axis, reference=witness, copy_of=dict(inst.copy_of), tolerance=witness.spacing / 2
    )
    mc = MonteCarloConfig(
        strategy.mc.n_outer,
        strategy.mc.n_inner,
        derive_seed(strategy.mc.seed, CERTIFY, *key),
        strategy.mc.alpha,
    )
    certificate = population_improvement(inst.scm, inst.label, f, inst.cost, inst.actions, mc=mc)
    if certificate.verdict is not Verdict.IMPROVEMENT:
        return OracleAnswer(Outcome.FAIL, certificate=certificate, witness=witness)
    return OracleAnswer(Outcome.CLASSIFIER, f, certificate, witness)


def _search(inst: GoodIncentivesInstance, strategy: Search, key: tuple):
    features = inst.features
    family = [
        combo
        for combo in itertools.product(strategy.family.weight_grid, repeat=len(features))
        if any(w != 0 for w in combo)
    ]
    for k, combo in enumerate(family):
        if k >= strategy.family.budget:
            raise BudgetExhausted(
                f"Search budget {strategy.family.budget} spent with "
                f"{len(family) - k} of {len(family)} classifiers unchecked"
            )
        f = LinearScore({name: float(w) for name, w in zip(features, combo) if w != 0})
        mc = MonteCarloConfig(
            strategy.mc.n_outer,
            strategy.mc.n_inner,
            derive_seed(strategy.mc.seed, CERTIFY, *key, k),
            strategy.mc.alpha,
        )
        certificate = population_improvement(
            inst.scm, inst.label, f, inst.cost, inst.actions, strategy.solver, mc
        )
        if certificate.verdict is Verdict.IMPROVEMENT:
            return OracleAnswer(Outcome.CLASSIFIER, f, certificate)
    return OracleAnswer(Outcome.FAIL)


def good_incentives_oracle(
    inst: GoodIncentivesInstance,
    strategy: Constructive | Search | None = None,
    key: tuple = (),
) -> OracleAnswer:
    """Return a classifier certified to incentivize improvement, or Fail."""
    strategy = strategy or Constructive()
    if isinstance(strategy, Search):
        return _search(inst, strategy, key)
    return _constructive(inst, strategy, key)


# ── Edge orientation ────────────────────────────────────────────────────────


def check_skeleton(skeleton: Skeleton, scm: Scm) -> None:
    truth = skeleton_of(scm.dag)
    if {n.name for n in skeleton.nodes} != set(scm.names):
        raise PreconditionFailed("Skeleton nodes differ from the model's nodes")
    if skeleton.undirected_edges != truth.undirected_edges:
        raise PreconditionFailed("Skeleton does not match the model's skeleton")


def orient_edges(
    skeleton: Skeleton,
    scm_truth: Scm,
    eps: float = 0.5,
    grid: ControlGrid | None = None,
    mc: MonteCarloConfig | None = None,
    strategy: Constructive | Search | None = None,
) -> OrientationResult:
    """
    One oracle call per skeleton edge {X_i, X_j} (i before j): the augmented
    instance has X_j as label, so Classifier means X_i -> X_j and Fail means X_j -> X_i.
    """
    check_skeleton(skeleton, scm_truth)
    grid = grid or ControlGrid()
    strategy = strategy or Constructive(grid, mc or MonteCarloConfig())

    oriented, transcript = [], []
    for k, (i, j) in enumerate(skeleton.sorted_edges()):
        inst = build_augmented_instance(scm_truth, (i, j), eps)
        answer = good_incentives_oracle(inst, strategy, key=(k,))
        if answer.outcome is Outcome.CLASSIFIER:
            # a constructive answer's witness is the control function, so only
            # search answers need the assumption checked separately
            if answer.witness is None and not check_control_assumption(
                scm_truth, (i, j), grid, (k,)
            ).holds:
                raise AssumptionViolated(
                    f"Oracle certified {i}->{j} but the control assumption fails on that edge"
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
                outcome=answer.outcome.value,
                certificate=answer.certificate,
            )
        )
        logger.info(f"Edge {i}-{j}: oracle {answer.outcome.value}, oriented {parent}->{child}")

    return OrientationResult(
        oriented=CausalDag(nodes=skeleton.nodes, edges=frozenset(oriented)),
        transcript=transcript,
    )
