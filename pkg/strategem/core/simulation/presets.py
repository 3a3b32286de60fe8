# strategem/core/simulation/presets.py

import copy
from dataclasses import dataclass

from strategem.core.simulation.monte_carlo import MonteCarloConfig


@dataclass
class SolverSpec:
    kind: str = "closed_form"  # "closed_form" | "grid"
    resolution: float = 0.05
    radius: float = 3.0

    @classmethod
    def grid(cls, resolution: float, radius: float) -> "SolverSpec":
        return cls("grid", resolution, radius)


@dataclass
class ControlGrid:
    # Intervention candidates spread over [-B, B]
    n_candidates: int = 64
    # Discretization of recovered ancestor-noise coordinates
    cells_per_dim: int = 32
    # Number of x_{-w} draws the control function is fitted on
    n_mesh: int = 128
    margin: float = 3.0
    seed: int = 0
    n_inner: int = 200


@dataclass
class ProbeConfig:
    n_mesh: int = 9
    n_alpha: int = 17
    margin: float = 3.0
    alpha: float = 0.01
    seed: int = 0
    n_inner: int = 200


@dataclass
class SearchFamily:
    weight_grid: tuple[float, ...] = (-1.0, 0.0, 1.0)
    budget: int = 64


PRESETS = {
    "quick": MonteCarloConfig(n_outer=200, n_inner=50),
    "default": MonteCarloConfig(),
    # Larger outer loop for the acceptance experiments
    "acceptance": MonteCarloConfig(n_outer=2000, n_inner=400),
}


def get_preset(name: str, override: dict | None = None) -> MonteCarloConfig:
    """
    Return a copy of a named Monte Carlo preset, optionally with fields overridden.
    """
    if name not in PRESETS:
        raise ValueError(f"Unknown preset: {name}. Available: {list(PRESETS.keys())}")
    config = copy.copy(PRESETS[name])
    for key, value in (override or {}).items():
        if not hasattr(config, key):
            raise ValueError(f"Unknown Monte Carlo field: {key}")
        setattr(config, key, value)
    return config
