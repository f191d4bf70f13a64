"""Deterministic block-parallel execution.

Monte Carlo work is split into blocks whose sizes depend only on the
requested replicate count, never on the thread count.  Each block derives
its own RNG stream from its index, and partial results are reduced in block
order, so results are bit-identical for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def default_threads() -> int:
    env = os.environ.get("POLYMERLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_blocks(worker: Callable[[int], T], n_blocks: int, threads: int = 1) -> list[T]:
    """Run ``worker(i)`` for i = 0..n_blocks-1, results in index order."""
    if n_blocks <= 0:
        return []
    threads = max(1, int(threads))
    if threads == 1 or n_blocks == 1:
        return [worker(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=min(threads, n_blocks)) as pool:
        return list(pool.map(worker, range(n_blocks)))


def block_sizes(total: int, block: int) -> list[int]:
    """Split ``total`` items into fixed-size blocks plus one remainder."""
    if total < 0 or block < 1:
        raise ValueError("need total >= 0 and block >= 1")
    sizes = [block] * (total // block)
    if total % block:
        sizes.append(total % block)
    return sizes
