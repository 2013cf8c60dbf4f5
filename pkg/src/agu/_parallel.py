import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker cap from ``AGU_THREADS`` (default: number of CPUs)."""
    raw = os.environ.get("AGU_THREADS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def ordered_map(fn, items):
    """Map ``fn`` over ``items`` and return results in input order.

    Work may run on several threads; results never depend on the thread
    count because every reduction happens afterwards, in list order.
    """
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
