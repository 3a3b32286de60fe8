"""
End-to-end reproductions over seeded corpora. Deselect with -m "not slow".
"""

import numpy as np
import pytest

from strategem.core.causal.counterfactual import ConditioningEvent, Intervention, abduce, counterfactual_value
from strategem.core.causal.functions import Constant, Gaussian, Linear
from strategem.core.causal.scm_engine import RandomAnmSpec, build_scm, random_anm, sample
from strategem.core.reductions.incentive_design import assumption_report, check_control_assumption
from strategem.core.reductions.monotonic_cost import build_outcome_monotonic_cost, linear_sign_recovery
from strategem.core.simulation.monte_carlo import MonteCarloConfig, derive_seed
from strategem.core.strategic.agent import ActionSet, LinearScore, Quadratic, best_response
from strategem.core.strategic.improvement import Verdict, population_improvement
from strategem.schema import BenchConfig
from strategem.services.experiment_service import ORACLE, TRIAL, run_bench

pytestmark = [pytest.mark.slow, pytest.mark.acceptance]

FEATURES = ("X", "Z")


def _unit_det_costs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    costs = [np.array([[2.0, -0.5], [-0.5, 0.625]])]
    while len(costs) < n:
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        c = q @ np.diag(rng.uniform(0.5, 2.0, size=2)) @ q.T
        costs.append(c / np.sqrt(np.linalg.det(c)))
    return costs


@pytest.mark.parametrize("C", _unit_det_costs(5))
def test_proxy_chain_improvement_is_minus_c12(proxy_chain_scm, C):
    cost = Quadratic.of(C)
    response = best_response(LinearScore({"Z": 1.0}), cost, [0.0, 0.0], ActionSet.full_space(FEATURES))
    np.testing.assert_allclose(response.action, np.linalg.solve(C, [0.0, 1.0]), atol=1e-12)

    est = population_improvement(
        proxy_chain_scm, "Y", LinearScore({"Z": 1.0}), cost, ActionSet.full_space(FEATURES),
        mc=MonteCarloConfig(n_outer=2000),
    )
    assert abs(est.point + C[0, 1]) <= 4 * est.std_error + 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_counterexample_never_improves(counterexample_scm, seed):
    est = population_improvement(
        counterexample_scm, "Y", LinearScore({"X": 1.0}), Quadratic.of([[1.0]]),
        ActionSet.full_space(["X"]), mc=MonteCarloConfig(n_outer=2000, seed=seed),
    )
    assert abs(est.point) <= 4 * est.std_error + 1e-9
    assert est.verdict is not Verdict.IMPROVEMENT


def _sign_model(rng):
    causal = {f"X{k}": float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)) for k in (1, 2, 3)}
    names = ["X1", "X2", "X3", "Y", "Z1", "Z2"]
    equations = {
        **{name: Constant(0.0) for name in causal},
        "Y": Linear(causal),
        "Z1": Linear({"Y": float(rng.uniform(0.5, 2.0)), "X2": float(rng.normal())}),
        "Z2": Linear({"Y": -float(rng.uniform(0.5, 2.0))}),
    }
    scm = build_scm(names, equations, {n: Gaussian() for n in names}, support_bound=10.0)
    return scm, causal


@pytest.mark.parametrize("seed", range(20))
def test_sign_recovery_uses_ten_queries(seed):
    scm, causal = _sign_model(np.random.default_rng(seed))
    features = ("X1", "X2", "X3", "Z1", "Z2")
    cost = build_outcome_monotonic_cost(scm, "Y", ActionSet.full_space(features))
    result = linear_sign_recovery(scm, cost)
    assert cost.evaluations == 10
    assert {n for n, s in result.features.items() if s.causal} == set(causal)
    for name, weight in causal.items():
        assert result.features[name].sign == np.sign(weight)


def test_counterfactual_consistency_on_random_anm():
    scm = random_anm(RandomAnmSpec(5, 0.6, (0.5, 2.0), seed=3))
    for values, noise in sample(scm, 1000, seed=1):
        for target in scm.names:
            assert counterfactual_value(scm, values, Intervention(), target) == values[target]
        recovered = abduce(scm, ConditioningEvent(values)).recovered
        assert recovered == pytest.approx(noise, rel=1e-12, abs=1e-12)


@pytest.fixture(scope="module")
def bench_config():
    return BenchConfig.model_validate(
        {
            "n_trials": 100,
            "node_range": [4, 6],
            "seed": 0,
            "mc": {"n_outer": 400, "n_inner": 50},
            "control": {"n_candidates": 33, "cells_per_dim": 16, "n_mesh": 64, "n_inner": 50},
            "probe": {"n_mesh": 9, "n_alpha": 17, "n_inner": 50},
        }
    )


def test_both_reductions_on_random_corpus(bench_config):
    result = run_bench(bench_config, threads=4)
    accuracy = result.tables["accuracy"].set_index("reduction")
    assert accuracy.loc["good_incentives", "correct"] >= 95
    assert accuracy.loc["monotonic_cost", "correct"] >= 95
    assert accuracy["calls_equal_edges"].all()
    assert result.tables["trials"]["agree"].all()


def test_control_assumption_on_corpus_edges(bench_config):
    rng = np.random.default_rng(bench_config.seed)
    lo, hi = bench_config.node_range
    sizes = rng.integers(lo, hi + 1, size=bench_config.n_trials)
    for trial, n_nodes in enumerate(sizes):
        scm = random_anm(
            RandomAnmSpec(
                int(n_nodes), bench_config.edge_probability, bench_config.weight_range,
                seed=derive_seed(bench_config.seed, TRIAL, trial),
            )
        )
        grid = bench_config.control.to_grid(derive_seed(bench_config.seed, ORACLE, trial))
        report = assumption_report(scm, grid)
        assert report.loc[report["direction"] == "causal", "holds"].all()
        assert not report.loc[report["direction"] == "reversed", "holds"].any()


def test_control_assumption_fails_for_multiplicative_noise(counterexample_scm, bench_config):
    check = check_control_assumption(counterexample_scm, ("X", "Y"), bench_config.control.to_grid(0))
    assert not check.holds
