"""
scheduler.py

Replica seeds and worker lanes. Results always come back in replica order,
so the worker count never changes what an experiment writes.
"""

from __future__ import annotations

from multiprocessing import get_context
from typing import Callable, Iterable, Sequence, TypeVar

from numpy.random import Generator, Philox, SeedSequence

from .messages import progress

T = TypeVar("T")
R = TypeVar("R")

# Progress lines every this many replicas.
_CADENCE = 100


def replica_seed(master_seed: int, index: int, tag: int = 0) -> int:
    """64-bit seed of replica `index`; `tag` separates experiment families."""
    ss = SeedSequence([master_seed, tag, index])
    return int(ss.generate_state(1, dtype="uint64")[0])


def replica_seeds(master_seed: int, count: int, tag: int = 0) -> list[int]:
    return [replica_seed(master_seed, i, tag) for i in range(count)]


def replica_rng(seed: int) -> Generator:
    return Generator(Philox(SeedSequence(seed)))


def run_replicas(
    worker: Callable[[T], R],
    tasks: Sequence[T] | Iterable[T],
    workers: int = 1,
    label: str = "replicas",
) -> list[R]:
    """Map worker over tasks, in order, on `workers` spawned processes."""
    tasks = list(tasks)
    total = len(tasks)
    results: list[R] = []
    if workers <= 1 or total <= 1:
        for task in tasks:
            results.append(worker(task))
            if len(results) % _CADENCE == 0:
                progress(label, len(results), total)
        return results

    ctx = get_context("spawn")
    with ctx.Pool(processes=workers) as pool:
        for result in pool.imap(worker, tasks, chunksize=1):
            results.append(result)
            if len(results) % _CADENCE == 0:
                progress(label, len(results), total)
    return results
