"""Worker-count independent Monte Carlo batching.

Samples are split into fixed-size batches whose layout depends only on the
sample count, never on the number of workers. Each batch is computed by the
same vectorized code regardless of which thread runs it, and per-sample
outputs are concatenated in sample order before any reduction, so estimates
are bit-identical for any ``workers``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from .noise import NoisePathSpec, derive_seed, sample_noise

T = TypeVar("T")

BATCH_SIZE = 128


def batch_bounds(n: int, batch_size: int = BATCH_SIZE) -> list[tuple[int, int]]:
    return [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]


def map_batches(fn: Callable[[int, int], T], n: int, workers: int = 1,
                batch_size: int = BATCH_SIZE) -> list[T]:
    bounds = batch_bounds(n, batch_size)
    if workers <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def sample_seeds(seed: int, start: int, stop: int) -> list[int]:
    return [derive_seed(seed, i) for i in range(start, stop)]


def ensemble_noise(seeds: Sequence[int], dt: float, n_steps: int, rates: np.ndarray):
    """Stacked OU increments and Brownian increments, each (b, n_modes, n_steps)."""
    n_modes = len(rates)
    ou = np.empty((len(seeds), n_modes, n_steps))
    dw = np.empty_like(ou)
    for i, s in enumerate(seeds):
        path = sample_noise(NoisePathSpec(s, dt, n_steps, n_modes))
        ou[i] = path.ou_increments(rates)
        dw[i] = path.increments
    return ou, dw


def mean_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and std/sqrt(n) along axis 0 (numpy pairwise summation)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = np.mean(values, axis=0)
    if n < 2:
        return mean, np.full_like(mean, np.inf)
    return mean, np.std(values, axis=0, ddof=1) / np.sqrt(n)
