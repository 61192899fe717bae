"""Thread-pool helper honoring the GRAPHBANDIT_THREADS cap.

Work items must be pure functions of their inputs; results are returned in
input order, so output bytes never depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "GRAPHBANDIT_THREADS"


def thread_count() -> int:
    raw = os.environ.get(ENV_THREADS, "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}")
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
