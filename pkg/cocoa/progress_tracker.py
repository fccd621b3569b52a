"""
Run progress and metrics records
Tracks the status of every run in a sweep and appends RunMetrics records to
a newline-delimited JSON sink.
"""

import json
import logging
import math
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

from .constants import METRICS_FIELDS
from .errors import CocoaError, UsageError

logger = logging.getLogger(__name__)

RUN_STATUSES = ("Pending", "Running", "Completed", "Failed")


@dataclass
class RunMetrics:
    """One epoch (kind='epoch') or one result row (kind='summary') of a run."""

    run_id: str
    method: str
    epoch: int
    kind: str = "epoch"
    stage: str = "pretrain"
    train_loss: Optional[float] = None
    val_loss: Optional[float] = None
    macro_f1: Optional[float] = None
    similarity_evaluations: int = 0
    batches: int = 0
    batch_size: Optional[int] = None
    seed: Optional[int] = None
    label_fraction: Optional[float] = None
    wall_seconds: float = 0.0

    def to_record(self) -> dict:
        data = asdict(self)
        return {key: _finite_or_none(data[key]) for key in METRICS_FIELDS}


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class MetricsSink:
    """Thread-safe newline-delimited JSON writer; ``None`` path keeps records in memory only."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.records: List[dict] = []
        self._lock = threading.Lock()
        if self.path:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text("", encoding="utf-8")
            except OSError as e:
                raise CocoaError(f"Error creating metrics file {self.path}: {e}") from e

    def emit(self, metrics: RunMetrics) -> None:
        record = metrics.to_record()
        line = json.dumps(record, sort_keys=False)
        with self._lock:
            self.records.append(record)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(line + "\n")


def read_metrics(path: Union[str, Path]) -> List[dict]:
    """Parse a metrics file back into records."""
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


class ProgressTracker:
    """Status of each run in a sweep plus overall completion."""

    def __init__(self):
        self.run_progress: Dict[str, dict] = {}
        self._lock = threading.Lock()

    def add_run(self, run_id: str, description: str = "") -> None:
        with self._lock:
            if run_id in self.run_progress:
                logger.debug("Run %s is already tracked", run_id)
                return
            self.run_progress[run_id] = {
                "index": len(self.run_progress) + 1,
                "description": description,
                "status": "Pending",
            }

    def update_run(self, run_id: str, status: str) -> None:
        with self._lock:
            info = self.run_progress.get(run_id)
            if info is None:
                logger.debug("No tracked run %s", run_id)
                return
            if status not in RUN_STATUSES:
                raise UsageError(f"unknown run status '{status}'")
            info["status"] = status
        if status in ("Completed", "Failed"):
            self.update_overall_progress()

    def counts(self) -> Dict[str, int]:
        with self._lock:
            statuses = [info["status"] for info in self.run_progress.values()]
        return {status: statuses.count(status) for status in RUN_STATUSES}

    def update_overall_progress(self) -> float:
        counts = self.counts()
        total = sum(counts.values())
        if not total:
            return 0.0
        done = counts["Completed"] + counts["Failed"]
        percentage = done / total * 100
        logger.info("Runs: %d/%d done (%.0f%%), %d failed", done, total, percentage, counts["Failed"])
        return percentage
