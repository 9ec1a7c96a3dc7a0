"""Ordered parallel map capped by ``KPP_LAB_THREADS`` (0 or 1 = sequential)."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("KPP_LAB_THREADS")
    if raw is None or raw.strip() == "":
        return 0
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def ordered_map(func, items):
    """``list(map(func, items))``, possibly threaded; output order always follows input."""
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
