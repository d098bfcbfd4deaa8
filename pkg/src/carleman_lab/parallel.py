"""Deterministic worker-pool map over independent experiment points."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Map fn over items preserving order; jobs > 1 uses a process pool.

    Every item is computed independently of the others, so the result is
    identical for any jobs value.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
