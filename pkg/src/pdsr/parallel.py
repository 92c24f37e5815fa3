"""Deterministic worker-pool helper.

Results are collected by task index, so output never depends on scheduling
or completion order; the HiGHS solves release the GIL, making thread pools
effective for the solver-bound maps used across the toolkit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, workers: int = 1) -> list:
    """Ordered map of ``fn`` over ``items`` with ``workers`` threads."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
