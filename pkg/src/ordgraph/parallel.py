"""Deterministic partitioning of sweep phases.

Work is cut into fixed-size partitions that do not depend on the worker
count, and partition ``j`` always draws from ``stream.child(j)``. Running
with one worker or many therefore yields bit-identical results.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, TypeVar

import numpy as np

from .rng import RngStream

PARTITION_SIZE = 16384
WORKERS_ENV = "ORDGRAPH_WORKERS"

T = TypeVar("T")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_partitioned(
    rng,
    n: int,
    fn: Callable[[int, int, np.random.Generator], T],
    workers: int = 1,
    size: int = PARTITION_SIZE,
) -> list[T]:
    """Apply ``fn(lo, hi, generator)`` over partitions of ``range(n)``.

    ``rng`` is either an ``RngStream`` (one child stream per partition) or a
    bare ``Generator`` (a single partition covering everything).
    """
    if isinstance(rng, np.random.Generator):
        return [fn(0, n, rng)]
    assert isinstance(rng, RngStream)
    size = max(1, int(size))
    bounds = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
    if not bounds:
        return []

    def job(j: int) -> T:
        lo, hi = bounds[j]
        return fn(lo, hi, rng.child(j).generator())

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, range(len(bounds))))
    return [job(j) for j in range(len(bounds))]


def single_generator(rng) -> np.random.Generator:
    """Generator for a phase that is not partitioned."""
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.child(0).generator()


@contextmanager
def timed(timer: dict | None, name: str):
    """Add the wall-clock seconds of the block to ``timer[name]`` when a dict is given."""
    if timer is None:
        yield
        return
    t0 = time.perf_counter()
    try:
        yield
    finally:
        timer[name] = timer.get(name, 0.0) + time.perf_counter() - t0
