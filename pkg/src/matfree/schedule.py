"""Abstract data-parallel schedule.

A *pass* is a set of independent work groups followed by a barrier. Each
group writes only its own output slots, so groups may run in any order or
concurrently; a host pool runs contiguous chunks of groups as vectorised
numpy calls.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_POOL: ThreadPoolExecutor | None = None
_POOL_SIZE = 0


def thread_count() -> int:
    env = os.environ.get("MATFREE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(4, os.cpu_count() or 1))


def _pool(n):
    global _POOL, _POOL_SIZE
    if _POOL is None or _POOL_SIZE != n:
        if _POOL is not None:
            _POOL.shutdown(wait=True)
        _POOL = ThreadPoolExecutor(max_workers=n, thread_name_prefix="matfree")
        _POOL_SIZE = n
    return _POOL


def run_pass(n_groups: int, kernel, max_chunk: int = 4096) -> None:
    """Run ``kernel(g0, g1)`` over ``[0, n_groups)`` in contiguous chunks.

    Returns once every chunk has finished (the pass barrier).
    """
    if n_groups <= 0:
        return
    n = thread_count()
    n_chunks = max(n, -(-n_groups // max_chunk))
    bounds = np.linspace(0, n_groups, min(n_chunks, n_groups) + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if n == 1 or len(chunks) == 1:
        for a, b in chunks:
            kernel(a, b)
        return
    for fut in [_pool(n).submit(kernel, a, b) for a, b in chunks]:
        fut.result()


@dataclass(frozen=True)
class WorkGroupPlan:
    strategy: str
    group_size: int    # work items per group
    block_len: int     # cubes per group (coalesced), outputs per row segment (singlepass), 1 cube (flexible)
    split_slots: int   # per-vertex accumulator slots written in pass 1
    n_groups: int
