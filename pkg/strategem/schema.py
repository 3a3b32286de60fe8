# strategem/schema.py
#
# Scenario and bench documents:
#   - pydantic models for every block of a scenario file
#   - per-experiment required-field checks
#   - conversion of validated blocks into core objects (model, classifier, cost, actions)
#
# Anything wrong with a document surfaces as ScenarioError or pydantic ValidationError,
# both of which the CLI reports with exit code 2.

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from strategem.core.causal.functions import _freeze
from strategem.core.causal.scm_engine import Scm, ensure_support_bound, scm_from_dict, validate
from strategem.core.errors import ScenarioError, StrategemError
from strategem.core.simulation.monte_carlo import MonteCarloConfig
from strategem.core.simulation.presets import ControlGrid, ProbeConfig, SolverSpec, get_preset
from strategem.core.strategic.agent import (
    ActionSet,
    Classifier,
    ConstantClassifier,
    CostFunction,
    GatedCoordinate,
    GridFunction,
    LinearScore,
    Quadratic,
    ZeroCost,
)


class McParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_outer: int = Field(default=2000, ge=2)
    n_inner: int = Field(default=200, ge=2)
    seed: int = Field(default=0, ge=0)
    alpha: float = Field(default=0.01, gt=0, lt=1)
    # explicitly given fields override the preset's values
    preset: Literal["quick", "default", "acceptance"] | None = None

    def to_config(self, seed: int | None = None) -> MonteCarloConfig:
        if self.preset is None:
            config = MonteCarloConfig(self.n_outer, self.n_inner, self.seed, self.alpha)
        else:
            given = self.model_fields_set - {"preset"}
            config = get_preset(self.preset, {k: getattr(self, k) for k in given})
        if seed is not None:
            config.seed = seed
        return config


class SolverParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["closed_form", "grid"] = "closed_form"
    resolution: float = Field(default=0.05, gt=0)
    radius: float = Field(default=3.0, gt=0)

    def to_spec(self) -> SolverSpec:
        return SolverSpec(self.kind, self.resolution, self.radius)


class ClassifierParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear_score", "constant", "grid_function"]
    weights: dict[str, float] = Field(default_factory=dict)
    offset: float = 0.0
    value: float = 0.0
    inputs: list[str] = Field(default_factory=list)
    edges: list[list[float]] = Field(default_factory=list)
    values: list = Field(default_factory=list)
    output_bound: float | None = Field(default=None, gt=0)


class CostParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["quadratic", "gated_coordinate", "zero"]
    C: list[list[float]] | None = None
    axis: str | None = None
    penalty: float | None = Field(default=None, gt=0)  # gated cost defaults to 2B


class ActionParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["full_space", "coordinate_line", "finite_grid"] = "full_space"
    axis: str | None = None
    points: list[list[float]] = Field(default_factory=list)


class ControlParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_candidates: int = Field(default=64, ge=2)
    cells_per_dim: int = Field(default=32, ge=1)
    n_mesh: int = Field(default=128, ge=2)
    margin: float = Field(default=3.0, ge=0)
    n_inner: int = Field(default=200, ge=2)

    def to_grid(self, seed: int) -> ControlGrid:
        return ControlGrid(
            self.n_candidates, self.cells_per_dim, self.n_mesh, self.margin, seed, self.n_inner
        )


class ProbeParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_mesh: int = Field(default=9, ge=1)
    n_alpha: int = Field(default=17, ge=2)
    margin: float = Field(default=3.0, ge=0)
    alpha: float = Field(default=0.01, gt=0, lt=1)
    n_inner: int = Field(default=200, ge=2)

    def to_config(self, seed: int) -> ProbeConfig:
        return ProbeConfig(self.n_mesh, self.n_alpha, self.margin, self.alpha, seed, self.n_inner)


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario_id: str = Field(default="scenario", pattern=r"^[A-Za-z0-9_.-]+$")
    experiment: Literal[
        "simulate", "improvement", "orient", "orient-cost", "sign-recovery", "check-assumption"
    ]
    scm: dict
    label: str | None = None
    features: list[str] | None = None
    classifier: ClassifierParams | None = None
    cost: CostParams | None = None
    actions: ActionParams = Field(default_factory=ActionParams)
    solver: SolverParams = Field(default_factory=SolverParams)
    mc: McParams = Field(default_factory=McParams)
    control: ControlParams = Field(default_factory=ControlParams)
    probe: ProbeParams = Field(default_factory=ProbeParams)
    estimator: Literal["paired", "two_term"] = "paired"
    individuals: list[dict[str, float]] = Field(default_factory=list)
    n_samples: int = Field(default=1000, ge=1)
    eps: float = Field(default=0.5, gt=0, lt=1)
    verify_assumption: bool = False
    output: str | None = None

    @model_validator(mode="after")
    def required_fields(self):
        needs = {
            "improvement": ("label", "classifier", "cost"),
            "sign-recovery": ("label",),
        }.get(self.experiment, ())
        missing = [name for name in needs if getattr(self, name) is None]
        if missing:
            raise ValueError(f"experiment '{self.experiment}' requires fields {missing}")
        return self


class BenchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bench_id: str = Field(default="bench", pattern=r"^[A-Za-z0-9_.-]+$")
    n_trials: int = Field(default=100, ge=1)
    node_range: tuple[int, int] = (4, 6)
    edge_probability: float = Field(default=0.5, ge=0, le=1)
    weight_range: tuple[float, float] = (0.5, 2.0)
    seed: int = Field(default=0, ge=0)
    eps: float = Field(default=0.5, gt=0, lt=1)
    mc: McParams = Field(default_factory=lambda: McParams(n_outer=400, n_inner=50))
    control: ControlParams = Field(default_factory=ControlParams)
    probe: ProbeParams = Field(default_factory=ProbeParams)

    @model_validator(mode="after")
    def ranges(self):
        lo, hi = self.node_range
        if not 2 <= lo <= hi:
            raise ValueError(f"node_range must satisfy 2 <= lo <= hi, got {self.node_range}")
        w_lo, w_hi = self.weight_range
        if not 0 < w_lo <= w_hi:
            raise ValueError(f"weight_range must satisfy 0 < lo <= hi, got {self.weight_range}")
        return self


# ── Loading ─────────────────────────────────────────────────────────────────


def read_document(path: str | Path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    return doc, raw


def load_scm(doc: dict, seed: int = 0) -> Scm:
    """Parse and validate a model document; fill support_bound if absent."""
    scm = scm_from_dict(doc)
    issues = validate(scm)
    if issues:
        listing = "; ".join(
            f"[{v.code}] {v.message}" for v in issues
        )
        raise ScenarioError(f"scm: {listing}")
    return ensure_support_bound(scm, seed)


def _known(scm: Scm, name: str | None, field_name: str) -> str:
    if name is None or not scm.dag.has_node(name):
        raise ScenarioError(f"{field_name}: unknown node '{name}'")
    return name


def build_classifier(params: ClassifierParams, scm: Scm) -> Classifier:
    if params.kind == "linear_score":
        for name in params.weights:
            _known(scm, name, "classifier.weights")
        return LinearScore(dict(params.weights), params.offset, params.output_bound)
    if params.kind == "constant":
        return ConstantClassifier(params.value, params.output_bound)
    for name in params.inputs:
        _known(scm, name, "classifier.inputs")
    try:
        return GridFunction(
            tuple(params.inputs),
            tuple(tuple(float(b) for b in e) for e in params.edges),
            _freeze(params.values),
            params.output_bound,
        )
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"classifier: malformed grid function ({e})") from e


def build_cost(params: CostParams, scm: Scm) -> CostFunction:
    if params.kind == "quadratic":
        if params.C is None:
            raise ScenarioError("cost.C: quadratic cost needs a matrix")
        try:
            return Quadratic.of(params.C)
        except ValueError as e:
            raise ScenarioError(f"cost.C: {e}") from e
    if params.kind == "gated_coordinate":
        axis = _known(scm, params.axis, "cost.axis")
        return GatedCoordinate(axis, params.penalty or 2.0 * scm.bound)
    return ZeroCost()


def build_actions(params: ActionParams, scm: Scm, features: list[str]) -> ActionSet:
    try:
        if params.kind == "coordinate_line":
            return ActionSet.coordinate_line(features, _known(scm, params.axis, "actions.axis"))
        if params.kind == "finite_grid":
            return ActionSet.finite_grid(features, params.points)
        return ActionSet.full_space(features)
    except StrategemError as e:
        raise ScenarioError(f"actions: {e}") from e


def resolve_features(scenario: Scenario, scm: Scm) -> list[str]:
    """Declared features, or every node except the label."""
    if scenario.features is None:
        return [n for n in scm.names if n != scenario.label]
    for name in scenario.features:
        _known(scm, name, "features")
    if scenario.label in scenario.features:
        raise ScenarioError(f"features: label '{scenario.label}' cannot be a feature")
    return list(scenario.features)
