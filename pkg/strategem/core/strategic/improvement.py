# strategem/core/strategic/improvement.py
#
# The improvement functional: I(f; x) = E[Y_{X_A:=Delta(x,f)_A}({X=x})] - E[Y | X=x]
# and its population average I(f), with a statistical improvement/gaming verdict.

from collections.abc import Callable, Mapping
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import norm

from strategem.config import logger
from strategem.core.causal.counterfactual import (
    Intervention,
    expected_counterfactual,
    label_event,
    paired_effect,
)
from strategem.core.causal.scm_engine import Scm, analytic_means, propagate, sample_frame
from strategem.core.errors import PreconditionFailed
from strategem.core.simulation.monte_carlo import (
    Estimate,
    MonteCarloConfig,
    chunked,
    derive_seed,
    parallel_map,
    summarize,
)
from strategem.core.simulation.presets import SolverSpec
from strategem.core.strategic.agent import (
    ActionSet,
    BestResponse,
    Classifier,
    CostFunction,
    best_response,
)

# stream tags keep individual, population and baseline draws apart
INDIVIDUAL = 1
POPULATION = 2
BASELINE = 3

ESTIMATORS = ("paired", "two_term")

# individuals per parallel task; results do not depend on the split
INDIVIDUAL_CHUNK = 128


class Verdict(str, Enum):
    IMPROVEMENT = "Improvement"
    GAMING = "Gaming"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ImprovementEstimate:
    point: float
    std_error: float
    n: int
    verdict: Verdict
    alpha: float

    def as_row(self) -> dict:
        return {
            "point": self.point,
            "std_error": self.std_error,
            "n": self.n,
            "verdict": self.verdict.value,
        }


def decide(point: float, std_error: float, alpha: float) -> Verdict:
    """One-sided Gaussian test at level alpha; a zero-width interval at 0 is gaming."""
    z = float(norm.ppf(1.0 - alpha))
    if point - z * std_error > 0:
        return Verdict.IMPROVEMENT
    if point + z * std_error <= 0:
        return Verdict.GAMING
    return Verdict.INCONCLUSIVE


def certify(estimate: Estimate, alpha: float, n: int | None = None) -> ImprovementEstimate:
    return ImprovementEstimate(
        point=estimate.mean,
        std_error=estimate.std_error,
        n=estimate.n if n is None else n,
        verdict=decide(estimate.mean, estimate.std_error, alpha),
        alpha=alpha,
    )


def _check_label(scm: Scm, label: str, actions: ActionSet) -> None:
    scm.check_node(label)
    for name in actions.features:
        scm.check_node(name)
    if label in actions.features:
        raise PreconditionFailed(f"Label {label} cannot also be a feature the agent acts on")


def adaptation_effect(
    scm: Scm,
    label: str,
    f: Classifier,
    c: CostFunction,
    values: Mapping[str, float],
    actions: ActionSet,
    solver: SolverSpec,
    n_inner: int,
    seed: int,
    key: tuple = (),
) -> tuple[BestResponse, Estimate]:
    """Best response of one individual and the paired effect of that adaptation on the label."""
    response = best_response(f, c, values, actions, solver)
    iv = Intervention(response.moved(actions.features))
    event = label_event(scm, label, values, actions.features)
    return response, paired_effect(scm, event, iv, label, n_inner, seed, key)


def individual_improvement(
    scm: Scm,
    label: str,
    f: Classifier,
    c: CostFunction,
    x: Mapping[str, float],
    actions: ActionSet,
    solver: SolverSpec | None = None,
    mc: MonteCarloConfig | None = None,
    key: tuple = (),
) -> ImprovementEstimate:
    mc = mc or MonteCarloConfig()
    _check_label(scm, label, actions)
    _, effect = adaptation_effect(
        scm, label, f, c, x, actions, solver or SolverSpec(), mc.n_inner, mc.seed,
        (INDIVIDUAL, *key),
    )
    return certify(effect, mc.alpha)


def _per_individual(fn: Callable[[int], float], n: int, threads: int | None) -> np.ndarray:
    chunks = parallel_map(
        lambda rows: [fn(i) for i in rows], chunked(n, INDIVIDUAL_CHUNK), threads
    )
    return np.array([v for chunk in chunks for v in chunk], dtype=float)


def population_improvement(
    scm: Scm,
    label: str,
    f: Classifier,
    c: CostFunction,
    actions: ActionSet,
    solver: SolverSpec | None = None,
    mc: MonteCarloConfig | None = None,
    estimator: str = "paired",
    threads: int | None = None,
) -> ImprovementEstimate:
    """
    I(f) over mc.n_outer sampled individuals.

    paired:   mean over individuals of I(f; x), both terms on common draws.
    two_term: mean first term minus E[Y], E[Y] exact for affine models and otherwise
              estimated on an independent stream.
    """
    mc = mc or MonteCarloConfig()
    solver = solver or SolverSpec()
    _check_label(scm, label, actions)
    if estimator not in ESTIMATORS:
        raise PreconditionFailed(f"Unknown estimator: {estimator}. Available: {list(ESTIMATORS)}")

    features = list(actions.features)
    frame, _ = sample_frame(scm, mc.n_outer, mc.seed, threads)
    rows = frame[features].to_numpy()
    logger.debug(f"Improvement of {f.kind} on {label}: {mc.n_outer} individuals, {estimator}")

    if estimator == "paired":

        def effect(i: int) -> float:
            values = dict(zip(features, rows[i]))
            _, est = adaptation_effect(
                scm, label, f, c, values, actions, solver, mc.n_inner, mc.seed, (POPULATION, i)
            )
            return est.mean

        return certify(summarize(_per_individual(effect, len(rows), threads)), mc.alpha)

    def first_term(i: int) -> float:
        values = dict(zip(features, rows[i]))
        response = best_response(f, c, values, actions, solver)
        iv = Intervention(response.moved(features))
        event = label_event(scm, label, values, features)
        return expected_counterfactual(
            scm, event, iv, label, mc.n_inner, mc.seed, (POPULATION, i)
        ).mean

    first = summarize(_per_individual(first_term, len(rows), threads))
    means = analytic_means(scm)
    if means is not None:
        baseline = Estimate(means[label], 0.0, 0, analytic=True)
    else:
        reference, _ = sample_frame(scm, mc.n_outer, derive_seed(mc.seed, BASELINE), threads)
        baseline = summarize(reference[label].to_numpy())
    combined = Estimate(
        first.mean - baseline.mean,
        float(np.hypot(first.std_error, baseline.std_error)),
        first.n,
    )
    return certify(combined, mc.alpha)


def potential_outcome_improvement(
    scm: Scm,
    label: str,
    f: Classifier,
    c: CostFunction,
    actions: ActionSet,
    solver: SolverSpec | None = None,
    mc: MonteCarloConfig | None = None,
    threads: int | None = None,
) -> ImprovementEstimate:
    """
    E_U[Y_{X:=Delta(x,f)}(U) - Y(U)] from retained ground-truth noise. Only a test
    oracle for the estimators above: it reads noise no estimator may see.
    """
    mc = mc or MonteCarloConfig()
    solver = solver or SolverSpec()
    _check_label(scm, label, actions)
    features = list(actions.features)
    frame, noise = sample_frame(scm, mc.n_outer, mc.seed, threads)
    rows = frame[features].to_numpy()
    noise_rows = noise[list(scm.names)].to_numpy()

    def effect(i: int) -> float:
        response = best_response(f, c, rows[i], actions, solver)
        do = response.moved(features)
        if not do:
            return 0.0
        u = dict(zip(scm.names, noise_rows[i]))
        return float(propagate(scm, u, do=do)[label] - propagate(scm, u)[label])

    return certify(summarize(_per_individual(effect, len(rows), threads)), mc.alpha)
