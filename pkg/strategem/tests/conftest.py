import json
import os

import pytest

# Set environment variables for testing before any strategem imports
os.environ["STRATEGEM_ENVIRONMENT"] = "test"
os.environ.setdefault("STRATEGEM_LOG_LEVEL", "WARNING")

from strategem.core.causal.functions import (  # noqa: E402
    NOISE,
    Constant,
    Gaussian,
    Linear,
    Product,
    Rademacher,
)
from strategem.core.causal.scm_engine import build_scm  # noqa: E402
from strategem.core.strategic.agent import Quadratic  # noqa: E402

PROXY_CHAIN_C = [[2.0, -0.5], [-0.5, 0.625]]


def gaussian_roots(names):
    return {name: Gaussian(0.0, 1.0) for name in names}


@pytest.fixture
def proxy_chain_scm():
    """X := U_X, Y := X + U_Y, Z := Y + U_Z with standard normal noise."""
    return build_scm(
        ["X", "Y", "Z"],
        {"X": Constant(0.0), "Y": Linear({"X": 1.0}), "Z": Linear({"Y": 1.0})},
        gaussian_roots(["X", "Y", "Z"]),
        support_bound=6.0,
    )


@pytest.fixture
def proxy_chain_cost():
    return Quadratic.of(PROXY_CHAIN_C)


@pytest.fixture
def counterexample_scm():
    """Y := eps * X with Rademacher eps."""
    return build_scm(
        ["X", "Y"],
        {"X": Constant(0.0), "Y": Product("X", NOISE)},
        {"X": Gaussian(0.0, 1.0), "Y": Rademacher()},
        composition={"Y": "embedded"},
        support_bound=6.0,
    )


@pytest.fixture
def chain_scm():
    """A -> B -> C, linear Gaussian."""
    return build_scm(
        ["A", "B", "C"],
        {"A": Constant(0.0), "B": Linear({"A": 1.5}), "C": Linear({"B": -0.8})},
        gaussian_roots(["A", "B", "C"]),
        support_bound=8.0,
    )


@pytest.fixture
def collider_scm():
    """A -> C <- B."""
    return build_scm(
        ["A", "B", "C"],
        {"A": Constant(0.0), "B": Constant(0.0), "C": Linear({"A": 1.0, "B": -2.0})},
        gaussian_roots(["A", "B", "C"]),
        support_bound=8.0,
    )


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, doc) -> str:
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(path)

    return _write
