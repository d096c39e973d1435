import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

#: environment variable capping the number of worker threads
THREADS_ENV: str = "SYNCCTL_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker count from ``SYNCCTL_THREADS``, defaulting to the machine's
    parallelism. Invalid values are ignored with a warning."""
    default = os.cpu_count() or 1
    value = os.environ.get(THREADS_ENV)
    if not value:
        return default
    try:
        count = int(value)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, value)
        return default
    if count < 1:
        logger.warning("ignoring %s=%d; must be at least 1", THREADS_ENV, count)
        return default
    return count


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> List[R]:
    """Map ``func`` over independent ``items`` on a thread pool,
    preserving order."""
    pending = list(items)
    workers = min(workers or thread_count(), max(len(pending), 1))
    if workers <= 1:
        return [func(item) for item in pending]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, pending))
