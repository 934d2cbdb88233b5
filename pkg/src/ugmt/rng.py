"""Counter-based random streams and deterministic reductions.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream index).  Streams are independent and addressable, so a
computation split over any number of workers reproduces the single-threaded
result bit for bit as long as per-stream outputs are reduced in stream order.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["stream_rng", "worker_count", "mean_and_stderr"]


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the given (seed, stream) pair; independent across streams."""
    if seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def worker_count() -> int:
    """Worker pool size from UGMT_WORKERS; 1 (sequential) when unset.

    Results never depend on this value; it only controls how independent
    streams are scheduled.  Stream evaluation is interpreter-bound, so a
    thread pool only pays off when the integrand releases the interpreter
    lock; it therefore must be requested explicitly.
    """
    env = os.environ.get("UGMT_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("UGMT_WORKERS must be >= 1")
        return n
    return 1


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error with pairwise (numpy) summation.

    The reduction order is fixed by the array order, so results are
    reproducible regardless of how the values were produced.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(np.sum(values) / n)
    if n == 1:
        return mean, 0.0
    var = float(np.sum((values - mean) ** 2) / (n - 1))
    return mean, float(np.sqrt(var / n))
