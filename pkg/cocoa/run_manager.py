"""
Run manager for sweeps
Executes independent training runs sequentially or on a thread pool and
reports their status to a ProgressTracker.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional

from .errors import ConfigurationError
from .progress_tracker import ProgressTracker

logger = logging.getLogger(__name__)


@dataclass
class RunTask:
    """One independent run: an id, a label for progress output and the work."""

    run_id: str
    description: str
    work: Callable[[], Any]


class RunManager:
    """Runs tasks with ``jobs`` workers; results come back in submission order."""

    def __init__(self, jobs: int = 1, progress_tracker: Optional[ProgressTracker] = None):
        if jobs < 1:
            raise ConfigurationError(f"jobs must be at least 1, got {jobs}")
        self.jobs = jobs
        self.progress_tracker = progress_tracker or ProgressTracker()

    def run_all(self, tasks: List[RunTask]) -> List[Any]:
        """
        Execute ``tasks`` and return their results.

        Raises:
            The first exception raised by a task, after every task has finished.
        """
        for task in tasks:
            self.progress_tracker.add_run(task.run_id, task.description)

        if self.jobs == 1 or len(tasks) <= 1:
            outcomes = [self._run_worker(task) for task in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                outcomes = list(pool.map(self._run_worker, tasks))

        failures = [error for _, error in outcomes if error is not None]
        if failures:
            logger.error("%d of %d runs failed", len(failures), len(tasks))
            raise failures[0]
        return [result for result, _ in outcomes]

    def _run_worker(self, task: RunTask):
        self.progress_tracker.update_run(task.run_id, status="Running")
        logger.debug("Starting run %s: %s", task.run_id, task.description)
        try:
            result = task.work()
        except Exception as e:
            logger.error("Run %s failed: %s", task.run_id, e)
            logger.debug("Run %s traceback", task.run_id, exc_info=True)
            self.progress_tracker.update_run(task.run_id, status="Failed")
            return None, e
        self.progress_tracker.update_run(task.run_id, status="Completed")
        return result, None
