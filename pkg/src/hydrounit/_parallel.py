from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Ordered map, fanned out over ``jobs`` worker processes when ``jobs > 1``.

    Results come back in input order regardless of completion order, so
    downstream output is identical for every ``jobs`` value.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
