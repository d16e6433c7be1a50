"""
Reproducible replicate streams, the worker pool, and deterministic reductions.

Replicate ``r`` of stream ``s`` under ``seed`` always draws from
``Generator(Philox(SeedSequence(seed, spawn_key=(crc32(s), r))))``, and every
reduction is an exactly rounded ``math.fsum``, so results are bit-identical for
any number of workers.
"""

from __future__ import annotations

import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

MIN_PARALLEL_REPLICATES = 64
CHUNKS_PER_WORKER = 4

_default_workers = 1


def configure_workers(workers: int | None) -> int:
    """Set the process-wide default worker count (None means all cores)."""
    global _default_workers
    _default_workers = max(1, workers if workers is not None else (os.cpu_count() or 1))
    logger.debug("worker pool size set to %d", _default_workers)
    return _default_workers


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def check_seed(seed: int | None) -> int:
    if seed is None:
        raise ValueError("a seed is required for stochastic computations")
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit non-negative integer, got {seed}")
    return int(seed)


def replicate_rng(seed: int, stream: str, replicate: int) -> np.random.Generator:
    """The counter-based generator owned by one replicate."""
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(stream_id(stream), replicate))
    return np.random.Generator(np.random.Philox(sequence))


def _run_chunk(fn: Callable[[np.random.Generator], T], seed: int, stream: str, start: int, stop: int) -> list[T]:
    return [fn(replicate_rng(seed, stream, r)) for r in range(start, stop)]


def run_replicates(
    fn: Callable[[np.random.Generator], T],
    replicates: int,
    seed: int,
    stream: str,
    workers: int | None = None,
) -> list[T]:
    """
    Evaluate ``fn`` once per replicate and return the results in replicate order.

    Args:
        fn: Picklable callable taking the replicate's generator
        replicates: Number of replicates
        seed: Experiment seed
        stream: Stream name keeping independent estimators apart
        workers: Process count; defaults to the configured pool size

    Returns:
        List of per-replicate results ordered by replicate index
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    seed = check_seed(seed)
    workers = _default_workers if workers is None else max(1, workers)
    if workers == 1 or replicates < MIN_PARALLEL_REPLICATES:
        return _run_chunk(fn, seed, stream, 0, replicates)

    bounds = np.linspace(0, replicates, workers * CHUNKS_PER_WORKER + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    results: list[T] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, seed, stream, a, b) for a, b in chunks]
        for future in futures:
            results.extend(future.result())
    return results


def fsum_mean(values: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(values, dtype=float).reshape(-1)
    return math.fsum(x.tolist()) / x.size


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte Carlo mean with its standard error (sample SD / sqrt(reps))."""

    value: float
    stderr: float
    reps: int

    def __post_init__(self):
        if self.stderr < 0.0:
            raise ValueError("stderr must be non-negative")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")

    @classmethod
    def from_samples(cls, samples: Sequence[float] | np.ndarray) -> EstimateWithError:
        x = np.asarray(samples, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("cannot estimate from zero samples")
        if np.all(x == x[0]):
            return cls(float(x[0]), 0.0, int(x.size))
        mean = fsum_mean(x)
        dev = x - mean
        variance = math.fsum((dev * dev).tolist()) / (x.size - 1)
        return cls(mean, math.sqrt(variance / x.size), int(x.size))

    @classmethod
    def exact(cls, value: float, reps: int = 1) -> EstimateWithError:
        return cls(float(value), 0.0, reps)

    def zscore(self, target: float) -> float:
        diff = self.value - target
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def scaled(self, factor: float) -> EstimateWithError:
        return EstimateWithError(self.value * factor, self.stderr * abs(factor), self.reps)


def ratio_estimate(numerator: Sequence[float] | np.ndarray, denominator: Sequence[float] | np.ndarray) -> EstimateWithError:
    """Ratio of means on paired draws with a delta-method standard error."""
    num = np.asarray(numerator, dtype=float).reshape(-1)
    den = np.asarray(denominator, dtype=float).reshape(-1)
    if num.size != den.size:
        raise ValueError("ratio_estimate needs paired samples")
    den_mean = fsum_mean(den)
    if den_mean == 0.0:
        raise ValueError("ratio_estimate: denominator mean is zero")
    ratio = fsum_mean(num) / den_mean
    residual = EstimateWithError.from_samples(num - ratio * den)
    return EstimateWithError(ratio, residual.stderr / abs(den_mean), int(num.size))


def difference_zscore(a: EstimateWithError, b: EstimateWithError) -> float:
    """z-score of a - b with pooled standard errors of independent estimates."""
    diff = a.value - b.value
    pooled = math.hypot(a.stderr, b.stderr)
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / pooled
