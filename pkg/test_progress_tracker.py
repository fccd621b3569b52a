"""
Unit tests for run progress tracking and metrics records
"""

import shutil
import tempfile
import threading
import unittest
from pathlib import Path

from cocoa.constants import METRICS_FIELDS
from cocoa.errors import UsageError
from cocoa.progress_tracker import MetricsSink, ProgressTracker, RunMetrics, read_metrics


class TestRunMetrics(unittest.TestCase):

    def test_record_fields(self):
        record = RunMetrics("r1", "cocoa", 3, train_loss=0.5, val_loss=float("nan"),
                            similarity_evaluations=120, batch_size=8, seed=0).to_record()
        self.assertEqual(tuple(record), METRICS_FIELDS)
        self.assertIsNone(record["val_loss"])
        self.assertEqual(record["kind"], "epoch")
        self.assertEqual(record["similarity_evaluations"], 120)


class TestMetricsSink(unittest.TestCase):

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_file_sink(self):
        path = self.test_dir / "runs" / "metrics.jsonl"
        path.parent.mkdir()
        path.write_text("stale\n", encoding="utf-8")
        sink = MetricsSink(path)
        for epoch in (1, 2):
            sink.emit(RunMetrics("r1", "cmc", epoch))
        records = read_metrics(path)
        self.assertEqual([r["epoch"] for r in records], [1, 2])
        self.assertEqual(records, sink.records)

    def test_memory_sink(self):
        sink = MetricsSink()
        sink.emit(RunMetrics("r1", "dcl", 1, macro_f1=0.75))
        self.assertIsNone(sink.path)
        self.assertEqual(sink.records[0]["macro_f1"], 0.75)

    def test_concurrent_emits(self):
        path = self.test_dir / "metrics.jsonl"
        sink = MetricsSink(path)
        threads = [threading.Thread(target=lambda i=i: [sink.emit(RunMetrics(f"r{i}", "cocoa", e))
                                                        for e in range(20)]) for i in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.assertEqual(len(read_metrics(path)), 80)


class TestProgressTracker(unittest.TestCase):

    def setUp(self):
        self.tracker = ProgressTracker()

    def test_add_and_update(self):
        self.tracker.add_run("a", "cocoa b8")
        self.tracker.add_run("b")
        self.tracker.add_run("a", "duplicate")
        self.assertEqual(self.tracker.run_progress["a"]["description"], "cocoa b8")
        self.assertEqual(self.tracker.run_progress["b"]["index"], 2)

        self.tracker.update_run("a", status="Running")
        self.assertEqual(self.tracker.run_progress["a"]["status"], "Running")
        self.tracker.update_run("a", status="Completed")
        self.tracker.update_run("missing", status="Completed")
        self.assertEqual(self.tracker.counts(),
                         {"Pending": 1, "Running": 0, "Completed": 1, "Failed": 0})

    def test_bad_status(self):
        self.tracker.add_run("a")
        with self.assertRaises(UsageError):
            self.tracker.update_run("a", status="Done")

    def test_overall_progress(self):
        self.assertEqual(self.tracker.update_overall_progress(), 0.0)
        for run_id in "abcd":
            self.tracker.add_run(run_id)
        self.tracker.update_run("a", status="Completed")
        with self.assertLogs("cocoa.progress_tracker", level="INFO"):
            self.tracker.update_run("b", status="Failed")
        self.assertEqual(self.tracker.update_overall_progress(), 50.0)


if __name__ == '__main__':
    unittest.main()
