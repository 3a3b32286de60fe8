from unittest.mock import MagicMock

import numpy as np
import pytest

from strategem.core.causal.functions import Constant, Gaussian, Linear
from strategem.core.causal.graph import skeleton_of
from strategem.core.causal.scm_engine import build_scm
from strategem.core.errors import AmbiguousSign, PreconditionFailed
from strategem.core.reductions.monotonic_cost import (
    bonferroni_z,
    build_outcome_monotonic_cost,
    linear_sign_recovery,
    orient_edges_via_cost,
    outcome_delta,
)
from strategem.core.simulation.presets import ControlGrid, ProbeConfig
from strategem.core.strategic.agent import ActionSet, TabularOutcome

FEATURES = ("X", "Z")
CAUSAL = {"X1": 1.5, "X2": -0.8, "X3": 2.0}
SIGN_FEATURES = ("X1", "X2", "X3", "Z1", "Z2")


@pytest.fixture
def linear_label_scm():
    names = ["X1", "X2", "X3", "Y", "Z1", "Z2"]
    return build_scm(
        names,
        {
            "X1": Constant(0.0),
            "X2": Constant(0.0),
            "X3": Constant(0.0),
            "Y": Linear(dict(CAUSAL)),
            "Z1": Linear({"Y": 1.0, "X1": 0.5}),
            "Z2": Linear({"Y": -0.7}),
        },
        {name: Gaussian() for name in names},
        support_bound=10.0,
    )


class TestOutcomeDelta:
    def test_proxy_chain_deltas(self, proxy_chain_scm):
        assert outcome_delta(proxy_chain_scm, "Y", [0, 0], [1.0, 0.0], FEATURES).delta == pytest.approx(1.0)
        assert outcome_delta(proxy_chain_scm, "Y", [0, 0], [0.0, 5.0], FEATURES).delta == 0.0

    def test_zero_action_is_exactly_zero(self, chain_scm):
        d = outcome_delta(chain_scm, "C", [0.4, -1.0], [0.0, 0.0], ("A", "B"))
        assert d.delta == 0.0
        assert d.std_error == 0.0


class TestMonotonicCost:
    def test_negative_deltas_are_free(self, proxy_chain_scm):
        cost = build_outcome_monotonic_cost(proxy_chain_scm, "Y", ActionSet.full_space(FEATURES))
        assert cost([2.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)
        assert cost([-2.0, 0.0], [0.0, 0.0]) == 0.0
        assert cost.evaluations == 2

    def test_cache_keeps_counting_queries(self, proxy_chain_scm):
        cost = build_outcome_monotonic_cost(proxy_chain_scm, "Y", ActionSet.full_space(FEATURES))
        for _ in range(3):
            cost([1.0, 1.0], [0.5, 0.5])
        assert cost.evaluations == 3
        assert len(cost._cache) == 1

    def test_action_outside_set(self, proxy_chain_scm):
        cost = build_outcome_monotonic_cost(
            proxy_chain_scm, "Y", ActionSet.coordinate_line(FEATURES, "X")
        )
        with pytest.raises(PreconditionFailed, match="outside"):
            cost([0.0, 1.0], [0.0, 0.0])

    def test_label_cannot_be_feature(self, proxy_chain_scm):
        with pytest.raises(PreconditionFailed, match="cannot also be a feature"):
            build_outcome_monotonic_cost(proxy_chain_scm, "Y", ActionSet.full_space(["X", "Y"]))

    def test_to_tabular(self, proxy_chain_scm):
        cost = build_outcome_monotonic_cost(proxy_chain_scm, "Y", ActionSet.full_space(FEATURES))
        mesh = [[0.0, 0.0], [1.0, -1.0]]
        actions = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]
        frozen = cost.to_tabular(mesh, actions)
        assert isinstance(frozen, TabularOutcome)
        np.testing.assert_allclose(
            frozen.evaluate(actions, mesh[1], FEATURES), cost.evaluate(actions, mesh[1], FEATURES)
        )

    def test_unit_moves_ordered_by_causal_weight(self):
        thetas = {"X1": 0.4, "X2": 1.1, "X3": 2.5}
        names = [*thetas, "Y"]
        scm = build_scm(
            names,
            {**{n: Constant(0.0) for n in thetas}, "Y": Linear(dict(thetas))},
            {n: Gaussian() for n in names},
            support_bound=10.0,
        )
        cost = build_outcome_monotonic_cost(scm, "Y", ActionSet.full_space(list(thetas)))
        unit_costs = [cost(row, np.zeros(3)) for row in np.eye(3)]
        assert unit_costs == pytest.approx(list(thetas.values()))
        assert unit_costs[0] < unit_costs[1] < unit_costs[2]


class TestOrientViaCost:
    @pytest.mark.parametrize("fixture", ["chain_scm", "collider_scm"])
    def test_recovers_orientation(self, fixture, request):
        scm = request.getfixturevalue(fixture)
        result = orient_edges_via_cost(skeleton_of(scm.dag), scm, ProbeConfig(n_inner=50))
        assert result.matches(scm.dag)
        assert result.n_calls == len(scm.dag.edges)
        assert all(r.n_probes == 9 * 17 for r in result.transcript)

    def test_parent_with_higher_index(self):
        scm = build_scm(
            ["Y", "X"],
            {"Y": Linear({"X": 1.0}), "X": Constant(0.0)},
            {"Y": Gaussian(), "X": Gaussian()},
            support_bound=6.0,
        )
        result = orient_edges_via_cost(skeleton_of(scm.dag), scm)
        (record,) = result.transcript
        assert record.edge == ("Y", "X")
        assert record.outcome == "zero"
        assert (record.parent, record.child) == ("X", "Y")

    def test_verified_assumption(self, chain_scm):
        grid = ControlGrid(n_candidates=17, cells_per_dim=8, n_mesh=32, n_inner=50)
        result = orient_edges_via_cost(
            skeleton_of(chain_scm.dag), chain_scm, verify_assumption=True, grid=grid
        )
        assert result.matches(chain_scm.dag)

    def test_bonferroni_threshold(self):
        assert bonferroni_z(ProbeConfig()) > 3.0
        assert bonferroni_z(ProbeConfig(margin=10.0)) == 10.0


class TestSignRecovery:
    def test_signs_and_query_count(self, linear_label_scm):
        cost = build_outcome_monotonic_cost(
            linear_label_scm, "Y", ActionSet.full_space(SIGN_FEATURES)
        )
        result = linear_sign_recovery(linear_label_scm, cost)
        assert result.query_count == 2 * len(SIGN_FEATURES)
        assert cost.evaluations == 10
        assert {k: v.sign for k, v in result.features.items()} == {
            "X1": 1, "X2": -1, "X3": 1, "Z1": 0, "Z2": 0,
        }
        assert [k for k, v in result.features.items() if v.causal] == ["X1", "X2", "X3"]
        frame = result.to_frame()
        assert list(frame.columns) == ["feature", "causal", "sign", "probe_plus", "probe_minus"]

    def test_requires_linear_label(self, counterexample_scm):
        cost = build_outcome_monotonic_cost(counterexample_scm, "Y", ActionSet.full_space(["X"]))
        with pytest.raises(PreconditionFailed, match="linear equation"):
            linear_sign_recovery(counterexample_scm, cost)

    def test_requires_full_space(self, linear_label_scm):
        cost = build_outcome_monotonic_cost(
            linear_label_scm, "Y", ActionSet.coordinate_line(SIGN_FEATURES, "X1")
        )
        with pytest.raises(PreconditionFailed, match="full-space"):
            linear_sign_recovery(linear_label_scm, cost)

    def test_requires_nonzero_coefficients(self):
        scm = build_scm(
            ["X", "Y"],
            {"X": Constant(0.0), "Y": Linear({"X": 0.0})},
            {"X": Gaussian(), "Y": Gaussian()},
            support_bound=6.0,
        )
        cost = build_outcome_monotonic_cost(scm, "Y", ActionSet.full_space(["X"]))
        with pytest.raises(PreconditionFailed, match="non-zero"):
            linear_sign_recovery(scm, cost)

    def test_ambiguous_sign(self, linear_label_scm):
        cost = MagicMock()
        cost.label = "Y"
        cost.actions = ActionSet.full_space(SIGN_FEATURES)
        cost.features = SIGN_FEATURES
        cost.evaluations = 0
        cost.return_value = 1.0
        with pytest.raises(AmbiguousSign, match="X1"):
            linear_sign_recovery(linear_label_scm, cost)
