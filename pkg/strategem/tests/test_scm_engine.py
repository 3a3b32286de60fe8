import numpy as np
import pandas as pd
import pytest

from strategem.core.causal.functions import (
    NOISE,
    Constant,
    Gaussian,
    Linear,
    Monomial,
    Polynomial,
    Product,
    Tabular,
    Uniform,
)
from strategem.core.causal.scm_engine import (
    RandomAnmSpec,
    analytic_means,
    build_scm,
    ensure_support_bound,
    forward_eval,
    random_anm,
    sample,
    sample_frame,
    scm_from_dict,
    scm_to_dict,
    validate,
    validate_or_raise,
)
from strategem.core.errors import EvaluationDomain, PreconditionFailed, ScenarioError


def _codes(scm):
    return {v.code for v in validate(scm)}


def _node(name, equation, noise=None, composition="additive"):
    return {
        "name": name,
        "equation": equation,
        "noise": noise or {"law": "gaussian"},
        "composition": composition,
    }


class TestValidate:
    def test_well_formed_models_have_no_violations(self, chain_scm, counterexample_scm):
        assert validate(chain_scm) == []
        assert validate(counterexample_scm) == []

    def test_cycle_detected(self):
        scm = scm_from_dict(
            {
                "nodes": [
                    _node("A", {"kind": "linear", "weights": {"B": 1.0}}),
                    _node("B", {"kind": "linear", "weights": {"A": 1.0}}),
                ],
                "edges": [["A", "B"], ["B", "A"]],
            }
        )
        assert "CycleDetected" in _codes(scm)

    def test_undeclared_parent(self):
        scm = scm_from_dict(
            {
                "nodes": [
                    _node("X", {"kind": "constant"}),
                    _node("Y", {"kind": "linear", "weights": {"X": 1.0}}),
                ],
                "edges": [],
            }
        )
        violations = validate(scm)
        assert [v.code for v in violations] == ["UndeclaredParent"]
        assert violations[0].node == "Y"

    def test_noise_read_by_additive_node(self):
        scm = scm_from_dict(
            {
                "nodes": [
                    _node("X", {"kind": "constant"}),
                    _node("Y", {"kind": "product", "inputs": ["X", "noise"]}),
                ],
                "edges": [["X", "Y"]],
            }
        )
        assert "NoiseInAdditive" in _codes(scm)

    def test_edge_to_undeclared_node(self):
        scm = scm_from_dict({"nodes": [_node("X", {"kind": "constant"})], "edges": [["X", "Q"]]})
        assert "UnknownNode" in _codes(scm)

    def test_malformed_noise_and_bound(self):
        scm = scm_from_dict(
            {
                "nodes": [_node("X", {"kind": "constant"}, {"law": "uniform", "lo": 1, "hi": 0})],
                "support_bound": -1.0,
            }
        )
        assert {"MalformedNoise", "InvalidSupportBound"} <= _codes(scm)

    def test_validate_or_raise(self):
        scm = scm_from_dict({"nodes": [_node("X", {"kind": "linear", "weights": {"Q": 1}})]})
        with pytest.raises(ScenarioError, match="UndeclaredParent"):
            validate_or_raise(scm)

    def test_unknown_equation_kind(self):
        with pytest.raises(ScenarioError, match="Unknown equation kind"):
            scm_from_dict({"nodes": [_node("X", {"kind": "spline"})]})


class TestForwardEval:
    def test_chain_values(self, chain_scm):
        values = forward_eval(chain_scm, {"A": 1.0, "B": 0.5, "C": 0.0})
        assert values["A"] == 1.0
        assert values["B"] == pytest.approx(2.0)
        assert values["C"] == pytest.approx(-1.6)

    def test_embedded_product(self, counterexample_scm):
        values = forward_eval(counterexample_scm, {"X": 2.0, "Y": -1.0})
        assert values["Y"] == pytest.approx(-2.0)

    def test_missing_noise(self, chain_scm):
        with pytest.raises(PreconditionFailed, match="does not cover"):
            forward_eval(chain_scm, {"A": 0.0})

    def test_tabular_outside_grid(self):
        scm = build_scm(
            ["X", "Y"],
            {"X": Constant(0.0), "Y": Tabular(("X",), ((0.0, 1.0, 2.0),), (1.0, 3.0))},
            {"X": Gaussian(0.0, 1.0), "Y": Gaussian(0.0, 1.0)},
        )
        assert forward_eval(scm, {"X": 1.5, "Y": 0.0})["Y"] == pytest.approx(3.0)
        with pytest.raises(EvaluationDomain, match="outside grid"):
            forward_eval(scm, {"X": 5.0, "Y": 0.0})

    def test_polynomial(self):
        scm = build_scm(
            ["X", "Y"],
            {
                "X": Constant(0.0),
                "Y": Polynomial((Monomial(2.0, {"X": 2}), Monomial(-1.0, {"X": 1}))),
            },
            {"X": Gaussian(), "Y": Gaussian()},
        )
        assert forward_eval(scm, {"X": 3.0, "Y": 0.5})["Y"] == pytest.approx(15.5)


class TestSampling:
    def test_sample_is_deterministic_per_seed(self, chain_scm):
        a, _ = sample_frame(chain_scm, 500, seed=7)
        b, _ = sample_frame(chain_scm, 500, seed=7)
        c, _ = sample_frame(chain_scm, 500, seed=8)
        pd.testing.assert_frame_equal(a, b)
        assert not a.equals(c)

    def test_threads_do_not_change_draws(self, chain_scm):
        one, noise_one = sample_frame(chain_scm, 10_000, seed=3, threads=1)
        four, noise_four = sample_frame(chain_scm, 10_000, seed=3, threads=4)
        pd.testing.assert_frame_equal(one, four)
        pd.testing.assert_frame_equal(noise_one, noise_four)

    def test_values_are_consistent_with_noise(self, chain_scm):
        values, noise = sample_frame(chain_scm, 200, seed=1)
        np.testing.assert_allclose(values["B"], 1.5 * values["A"] + noise["B"])
        np.testing.assert_allclose(values["C"], -0.8 * values["B"] + noise["C"])

    def test_sample_pairs(self, chain_scm):
        draws = sample(chain_scm, 5, seed=0)
        assert len(draws) == 5
        values, noise = draws[0]
        assert set(values) == set(noise) == {"A", "B", "C"}

    def test_zero_samples(self, chain_scm):
        with pytest.raises(PreconditionFailed):
            sample_frame(chain_scm, 0, seed=0)


class TestRandomAnm:
    def test_deterministic_per_seed(self):
        a = random_anm(RandomAnmSpec(5, seed=11))
        b = random_anm(RandomAnmSpec(5, seed=11))
        assert a.dag.edges == b.dag.edges
        assert scm_to_dict(a) == scm_to_dict(b)

    def test_weights_in_range_and_anm(self):
        scm = random_anm(RandomAnmSpec(6, edge_probability=0.8, weight_range=(0.5, 2.0), seed=2))
        assert scm.is_anm()
        assert scm.dag.is_acyclic()
        assert scm.support_bound > 0
        for name in scm.names:
            for w in scm.equations[name].weights.values():
                assert 0.5 <= abs(w) <= 2.0

    def test_rejects_tiny_graph(self):
        with pytest.raises(PreconditionFailed, match="n_nodes"):
            random_anm(RandomAnmSpec(1))

    def test_draws_always_validate(self):
        for seed in range(100):
            scm = random_anm(RandomAnmSpec(6, seed=seed))
            assert validate(scm) == [], seed


def test_analytic_means():
    scm = build_scm(
        ["X", "Y"],
        {"X": Constant(1.0), "Y": Linear({"X": 2.0}, offset=0.5)},
        {"X": Uniform(0.0, 2.0), "Y": Gaussian(1.0, 1.0)},
    )
    assert analytic_means(scm) == pytest.approx({"X": 2.0, "Y": 5.5})


def test_analytic_means_refuses_products(counterexample_scm):
    assert analytic_means(counterexample_scm) is None


def test_sample_means_match_analytic_means():
    scm = build_scm(
        ["X", "Y", "Z"],
        {
            "X": Constant(1.0),
            "Y": Linear({"X": 2.0}, offset=0.5),
            "Z": Linear({"X": -1.0, "Y": 0.5}),
        },
        {"X": Uniform(0.0, 2.0), "Y": Gaussian(1.0, 1.0), "Z": Gaussian(-0.5, 2.0)},
    )
    expected = analytic_means(scm)
    values, _ = sample_frame(scm, 100_000, seed=12)
    for name, mean in expected.items():
        column = values[name]
        std_error = column.std(ddof=1) / np.sqrt(len(column))
        assert abs(column.mean() - mean) <= 5 * std_error, name


def test_build_scm_derives_edges():
    scm = build_scm(
        ["X", "Y", "W"],
        {"X": Constant(0.0), "Y": Product("X", NOISE), "W": Linear({"X": 1.0, "Y": 1.0})},
        {"X": Gaussian(), "Y": Gaussian(), "W": Gaussian()},
        composition={"Y": "embedded"},
    )
    assert scm.dag.edges == frozenset({("X", "Y"), ("X", "W"), ("Y", "W")})
    assert not scm.is_anm()


def test_support_bound_estimated_once(chain_scm):
    scm = ensure_support_bound(chain_scm.with_support_bound(1.0))
    assert scm.support_bound == 1.0
    unbounded = build_scm(["A"], {"A": Constant(0.0)}, {"A": Gaussian()})
    with pytest.raises(PreconditionFailed, match="support_bound"):
        _ = unbounded.bound
    assert ensure_support_bound(unbounded).bound > 0


def test_document_round_trip(counterexample_scm, chain_scm):
    for scm in (counterexample_scm, chain_scm):
        again = scm_from_dict(scm_to_dict(scm))
        assert again.dag.edges == scm.dag.edges
        assert again.names == scm.names
        assert again.equations == scm.equations
        assert again.noises == scm.noises
        assert again.composition == scm.composition
        assert again.support_bound == scm.support_bound
