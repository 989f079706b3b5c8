"""Deterministic fan-out of per-target work over a thread pool.

Targets are split into chunks of a fixed size that does not depend on the
worker count. Each chunk writes only its own slice of the output, so results
are bit-identical for any number of threads.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

CHUNK = 64

_lock = threading.Lock()
_threads = 1
_pool: ThreadPoolExecutor | None = None


def set_threads(n: int) -> None:
    """Set the number of worker threads used by the pairwise kernels."""
    global _threads, _pool
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    with _lock:
        if n != _threads and _pool is not None:
            _pool.shutdown(wait=True)
            _pool = None
        _threads = n


def get_threads() -> int:
    return _threads


def _get_pool() -> ThreadPoolExecutor:
    global _pool
    with _lock:
        if _pool is None:
            _pool = ThreadPoolExecutor(max_workers=_threads)
        return _pool


def for_chunks(n: int, work: Callable[[int, int], int]) -> int:
    """Run ``work(i0, i1)`` over fixed chunks of ``range(n)``.

    ``work`` returns -1 on success or the index of an offending target. The
    smallest offending index is returned (or -1), independent of scheduling.
    """
    if n <= 0:
        return -1
    bounds = [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]
    if _threads == 1 or len(bounds) == 1:
        flags = [work(i0, i1) for i0, i1 in bounds]
    else:
        pool = _get_pool()
        flags = list(pool.map(lambda b: work(*b), bounds))
    bad = [f for f in flags if f >= 0]
    return min(bad) if bad else -1
