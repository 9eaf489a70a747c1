import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_jobs() -> int:
    """Worker count from GENPRIOR_JOBS, defaulting to serial execution"""
    value = os.getenv('GENPRIOR_JOBS', '1')
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("Ignoring invalid GENPRIOR_JOBS=%r", value)
        return 1


class TaskScheduler:
    """
    Runs independent tasks (restarts, kernels, sweep cells) on a thread pool

    Results always come back in submission order, so reductions over them are
    identical for any worker count.
    """

    def __init__(self, jobs: Optional[int] = None):
        self.jobs = max(1, jobs if jobs is not None else default_jobs())
        self._lock = threading.Lock()
        self.completed = 0
        self.failed = 0

    def _run_one(self, task: Callable[[T], R], item: T) -> R:
        try:
            result = task(item)
        except Exception:
            with self._lock:
                self.failed += 1
            raise
        with self._lock:
            self.completed += 1
        return result

    def map(self, task: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Apply task to every item; the first exception in submission order is re-raised"""
        items = list(items)
        if self.jobs == 1 or len(items) <= 1:
            return [self._run_one(task, item) for item in items]

        logger.debug("Task scheduler running %d tasks on %d workers", len(items), self.jobs)
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            futures = [pool.submit(self._run_one, task, item) for item in items]
        return [future.result() for future in futures]

    def map_settled(self, task: Callable[[T], R], items: Sequence[T]) -> List[object]:
        """Like map, but each slot holds either the result or the exception it raised"""
        def settle(item):
            try:
                return task(item)
            except Exception as e:
                logger.warning("Task failed: %s", e)
                return e

        return self.map(settle, items)
