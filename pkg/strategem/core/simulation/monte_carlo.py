# strategem/core/simulation/monte_carlo.py
#
# Seed streams, chunked parallel mapping and summary statistics shared by every
# Monte Carlo loop in the package.

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from strategem.config import settings


@dataclass
class MonteCarloConfig:
    n_outer: int = 2000
    n_inner: int = 200
    seed: int = 0
    alpha: float = 0.01


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo point estimate. Analytic estimates carry std_error 0."""

    mean: float
    std_error: float
    n: int
    analytic: bool = False


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, *key); independent of any worker layout."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def derive_seed(seed: int, *key: int) -> int:
    """Child seed for a sub-experiment (an edge, a trial) so siblings never share streams."""
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def chunk_streams(seed: int, n: int, chunk_size: int | None = None):
    """Split n draws into fixed-size chunks, one independent Philox stream per chunk."""
    chunk_size = chunk_size or settings.chunk_size
    n_chunks = max(1, -(-n // chunk_size))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(chunk_size, n - k * chunk_size) for k in range(n_chunks)]
    return [
        (np.random.Generator(np.random.Philox(ss)), size)
        for ss, size in zip(children, sizes)
        if size > 0
    ]


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Ordered map over items; threads only changes wall time, never the output."""
    threads = threads or settings.threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=threads, prefer="threads")(delayed(fn)(item) for item in items)


def chunked(n: int, chunk_size: int | None = None) -> list[range]:
    chunk_size = chunk_size or settings.chunk_size
    return [range(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def summarize(values, analytic: bool = False) -> Estimate:
    """Mean with standard error = sample stddev / sqrt(n)."""
    values = np.asarray(values, dtype=float)
    n = int(values.size)
    if n == 0:
        return Estimate(float("nan"), float("nan"), 0)
    mean = float(np.mean(values))
    if n < 2 or analytic:
        return Estimate(mean, 0.0, n, analytic)
    return Estimate(mean, float(np.std(values, ddof=1) / np.sqrt(n)), n)


def stat(values) -> dict:
    """Descriptive summary for reports."""
    values = np.asarray(values, dtype=float)
    return {
        "mean": round(float(np.mean(values)), 6),
        "min": round(float(np.min(values)), 6),
        "max": round(float(np.max(values)), 6),
        "std": round(float(np.std(values)), 6),
    }
