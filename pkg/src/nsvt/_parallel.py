"""Index-ordered parallel map shared by the Monte Carlo drivers."""
import os
from concurrent.futures import ProcessPoolExecutor


def available_workers():
    """Worker count from ``NSVT_THREADS`` or the CPUs this process may use."""
    env = os.environ.get("NSVT_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def ordered_map(func, items, workers=None):
    """``[func(x) for x in items]``, optionally spread over worker processes.

    Results are placed by input position, never by completion order, so the
    output does not depend on ``workers``.  ``func`` must be picklable.
    """
    items = list(items)
    workers = available_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunk))
