"""Process-level parallelism capped by the SIRUS_THREADS environment variable."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count() -> int:
    cap = os.environ.get("SIRUS_THREADS")
    available = os.cpu_count() or 1
    if cap is None:
        return available
    try:
        return max(1, min(int(cap), available))
    except ValueError:
        return available


def parallel_map(fn, items: list) -> list:
    """Apply ``fn`` across items, in worker processes when allowed.

    Results come back in input order, so output is identical to serial
    execution; ``fn`` must be picklable (module level).
    """
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
