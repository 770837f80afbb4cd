import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "DILATION_LAB_THREADS"


def max_threads() -> int:
    """Worker cap from ``DILATION_LAB_THREADS``; serial when unset."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """``list(map(fn, items))``, threaded when allowed; output order matches input."""
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
