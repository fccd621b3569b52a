"""
Unit tests for pretraining, probing, fine-tuning and the sweeps
Uses a small synthetic dataset and a narrow encoder so every run takes a
fraction of a second.
"""

import os
import unittest

import numpy as np

from cocoa.constants import MAX_EPOCHS, SLOW_TESTS_ENV
from cocoa.encoder import params_hash
from cocoa.errors import ConfigurationError, InputError
from cocoa.losses import count_formula
from cocoa.pipeline import (
    DataSplits, TrainConfig, batch_sweep, best_batch_sizes, embed, evaluate_macro_f1,
    finetune, label_curve, linear_probe, modality_pair_runs, pretrain, random_encoders, tau_sweep,
)
from cocoa.progress_tracker import MetricsSink, ProgressTracker, RunMetrics
from cocoa.synthgen import SynthConfig, generate

TINY_ENCODER = {"kernel_sizes": [3, 3, 2], "filter_counts": [4, 4, 4], "projection_dim": 8, "fusion_dim": 8}

RUN_SLOW = os.environ.get(SLOW_TESTS_ENV) == "1"


def class_cosine_gap(features, labels):
    """Mean within-class cosine similarity minus mean between-class cosine similarity."""
    unit = features / np.linalg.norm(features, axis=1, keepdims=True)
    sims = unit @ unit.T
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(labels), dtype=bool)
    return float(sims[same & off_diagonal].mean() - sims[~same].mean())


def tiny_config(**overrides):
    params = dict(method="cocoa", batch_size=8, max_epochs=2, early_stop_patience=2,
                  num_seeds=1, encoder=dict(TINY_ENCODER))
    params.update(overrides)
    return TrainConfig(**params)


class PipelineTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.two = generate(SynthConfig(num_classes=3, num_modalities=2, channels_per_modality=2, window=16,
                                       windows_per_class=20, segment_windows=5, noise_std=0.3, seed=1))
        cls.three = generate(SynthConfig(num_classes=3, num_modalities=3, channels_per_modality=2, window=16,
                                         windows_per_class=20, segment_windows=5, noise_std=0.3, seed=2))
        cls.splits = DataSplits.from_dataset(cls.two, seed=0)


class TestTrainConfig(unittest.TestCase):
    """Run configuration validation"""

    def test_invalid_values(self):
        cases = [dict(method="simclr"), dict(batch_size=1), dict(max_epochs=0),
                 dict(early_stop_patience=0), dict(lr=0.0), dict(num_seeds=0),
                 dict(encoder={"depth": 3})]
        for case in cases:
            with self.subTest(case=case):
                with self.assertRaises(ConfigurationError):
                    TrainConfig(**case)

    def test_seeds_and_with(self):
        config = TrainConfig(seed=3, num_seeds=2)
        self.assertEqual(config.seeds, [3, 4])
        changed = config.with_(batch_size=64)
        self.assertEqual(changed.batch_size, 64)
        self.assertEqual(config.batch_size, 16)


class TestMacroF1(unittest.TestCase):
    """Macro-averaged F1"""

    def test_examples(self):
        self.assertEqual(evaluate_macro_f1([0, 1, 2], [0, 1, 2], 3), 1.0)
        self.assertAlmostEqual(evaluate_macro_f1([0, 1, 1, 0], [0, 1, 0, 1], 2), 0.5)
        # class 0: precision 1/3, recall 1; classes 1 and 2 score 0
        self.assertAlmostEqual(evaluate_macro_f1([0, 0, 0], [0, 1, 2], 3), 1.0 / 6.0)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, size=50)
        predictions = np.where(rng.random(50) < 0.6, labels, rng.integers(0, 4, size=50))
        mapping = np.array([2, 0, 3, 1])
        self.assertAlmostEqual(evaluate_macro_f1(predictions, labels, 4),
                               evaluate_macro_f1(mapping[predictions], mapping[labels], 4))

    def test_absent_class_scores_zero(self):
        with self.assertLogs("cocoa.pipeline", level="WARNING"):
            score = evaluate_macro_f1([0, 1], [0, 1], 3)
        self.assertAlmostEqual(score, 2.0 / 3.0)

    def test_bad_input(self):
        with self.assertRaises(InputError):
            evaluate_macro_f1([0, 1], [0, 1, 1], 2)
        with self.assertRaises(InputError):
            evaluate_macro_f1([0, 1], [0, 3], 2)


class TestPretrain(PipelineTestCase):
    """Self-supervised pretraining"""

    def test_deterministic(self):
        config = tiny_config()
        first = pretrain(self.splits, config)
        second = pretrain(self.splits, config)
        self.assertEqual(params_hash(first.params), params_hash(second.params))
        self.assertEqual([m.train_loss for m in first.metrics], [m.train_loss for m in second.metrics])

    def test_epoch_bounds(self):
        for patience in (1, 2):
            with self.subTest(patience=patience):
                result = pretrain(self.splits, tiny_config(max_epochs=3, early_stop_patience=patience))
                epochs = len(result.metrics)
                self.assertLessEqual(epochs, 3)
                self.assertGreaterEqual(result.best_epoch, 1)
                if epochs < 3:
                    self.assertEqual(epochs - result.best_epoch, patience)

    def test_evaluation_accounting(self):
        sink = MetricsSink()
        result = pretrain(self.splits, tiny_config(max_epochs=1), sink=sink, run_id="count")
        self.assertEqual(result.evaluations_per_step, count_formula("cocoa", 2, 8))
        record = sink.records[0]
        self.assertEqual(record["run_id"], "count")
        self.assertEqual(record["similarity_evaluations"], record["batches"] * count_formula("cocoa", 2, 8))
        self.assertEqual(record["batches"], self.splits.train.num_windows // 8)

    def test_method_modality_mismatch(self):
        with self.assertRaises(ConfigurationError):
            pretrain(self.three, tiny_config(method="infonce"))
        with self.assertRaises(ConfigurationError):
            pretrain(self.splits, tiny_config(modalities=["m0"]))
        with self.assertRaises(ConfigurationError):
            pretrain(self.splits, tiny_config(method="supervised"))

    def test_batch_larger_than_train_split(self):
        with self.assertRaises(ConfigurationError):
            pretrain(self.splits, tiny_config(batch_size=500))

    def test_pair_method_on_selected_modalities(self):
        result = pretrain(self.three, tiny_config(method="dcl", modalities=["m0", "m2"], max_epochs=1))
        self.assertEqual(result.params.config.modality_names, ("m0", "m2"))

    def test_embed_shape(self):
        params = random_encoders(self.two, tiny_config())
        self.assertEqual(embed(params, self.two, chunk=7).shape, (self.two.num_windows, 16))


class TestClassifiers(PipelineTestCase):
    """Linear probe and fine-tuning"""

    def test_probe_keeps_encoders_frozen(self):
        encoders = random_encoders(self.two, tiny_config())
        before = params_hash(encoders)
        result = linear_probe(encoders, self.splits, tiny_config())
        self.assertEqual(params_hash(encoders), before)
        self.assertEqual(params_hash(result.encoders), before)
        self.assertGreaterEqual(result.test_f1, 0.0)
        self.assertLessEqual(result.test_f1, 1.0)
        self.assertTrue(all(m.stage == "probe" for m in result.metrics))

    def test_finetune_updates_a_copy(self):
        encoders = random_encoders(self.two, tiny_config())
        before = params_hash(encoders)
        result = finetune(encoders, self.splits, tiny_config(max_epochs=1), label_fraction=0.5)
        self.assertEqual(params_hash(encoders), before)
        self.assertNotEqual(params_hash(result.encoders), before)
        self.assertEqual(result.metrics[0].label_fraction, 0.5)

    def test_supervised_baseline(self):
        result = finetune(None, self.splits, tiny_config(method="supervised", max_epochs=1))
        self.assertGreaterEqual(result.val_f1, 0.0)
        self.assertEqual(result.encoders.config.num_modalities, 2)

    def test_unlabelled_data(self):
        unlabelled = DataSplits(*(part.subset(np.arange(part.num_windows)) for part in
                                  (self.splits.train, self.splits.val, self.splits.test)))
        unlabelled.train.labels = None
        with self.assertRaises(InputError):
            linear_probe(random_encoders(self.two, tiny_config()), unlabelled, tiny_config())


class TestSweeps(PipelineTestCase):
    """Batch, label, modality and temperature sweeps"""

    def test_batch_sweep(self):
        tracker = ProgressTracker()
        rows = batch_sweep(self.splits, ["infonce", "cocoa"], [8, 4], tiny_config(max_epochs=1),
                           tracker=tracker)
        keys = [(r.method, r.batch_size, r.seed) for r in rows]
        self.assertEqual(keys, [("cocoa", 4, 0), ("cocoa", 8, 0), ("infonce", 4, 0), ("infonce", 8, 0)])
        self.assertEqual(len(set(keys)), len(keys))
        self.assertEqual(rows[1].similarity_evaluations, count_formula("cocoa", 2, 8))
        self.assertTrue(all(r.kind == "summary" for r in rows))
        self.assertEqual(tracker.counts()["Completed"], 4)

        best = best_batch_sizes(rows)
        self.assertEqual(set(best), {"cocoa", "infonce"})
        self.assertIn(best["cocoa"][0], (4, 8))

    def test_batch_sweep_threads_match_sequential(self):
        config = tiny_config(max_epochs=1)
        sequential = batch_sweep(self.splits, ["cocoa"], [4, 8], config)
        threaded = batch_sweep(self.splits, ["cocoa"], [4, 8], config, jobs=2)
        self.assertEqual([r.macro_f1 for r in sequential], [r.macro_f1 for r in threaded])

    def test_best_batch_ties_go_to_smaller(self):
        rows = [RunMetrics("a", "cocoa", 0, batch_size=32, macro_f1=0.5),
                RunMetrics("b", "cocoa", 0, batch_size=8, macro_f1=0.5)]
        self.assertEqual(best_batch_sizes(rows), {"cocoa": (8, 0.5)})

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            batch_sweep(self.splits, ["simclr"], [8], tiny_config())

    def test_label_curve(self):
        sink = MetricsSink()
        curve = label_curve(self.splits, "cocoa", [1.0, 0.5], tiny_config(max_epochs=1, num_seeds=2), sink=sink)
        self.assertEqual([p.label_fraction for p in curve.points], [0.5, 1.0])
        for point in curve.points:
            self.assertEqual(point.num_seeds, 2)
            self.assertGreaterEqual(point.std_f1, 0.0)
        self.assertEqual(len(curve.rows), 4)
        summaries = [r for r in sink.records if r["kind"] == "summary"]
        self.assertEqual(len(summaries), 4)
        with self.assertRaises(ConfigurationError):
            label_curve(self.splits, "cocoa", [0.0], tiny_config())

    def test_modality_pairs(self):
        report = modality_pair_runs(self.three, tiny_config(max_epochs=1))
        self.assertEqual(set(report.pair_scores), {("m0", "m1"), ("m0", "m2"), ("m1", "m2")})
        self.assertIsNotNone(report.all_mean)
        self.assertEqual(len(report.rows), 4)
        self.assertAlmostEqual(report.pair_mean, float(np.mean(list(report.pair_scores.values()))))

    def test_tau_sweep(self):
        report = tau_sweep(self.splits, tiny_config(max_epochs=1), taus=[0.5, 0.1])
        self.assertEqual(sorted(report.mean_val_f1), [0.1, 0.5])
        self.assertIn(report.best_tau, (0.1, 0.5))
        self.assertEqual(len(report.rows), 2)
        with self.assertRaises(ConfigurationError):
            tau_sweep(self.splits, tiny_config(method="supervised"))


class TestDefaultDataset(unittest.TestCase):
    """Untrained encoders must leave room for pretraining to help"""

    def test_class_cosine_gap(self):
        features = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
        self.assertAlmostEqual(class_cosine_gap(features, [0, 0, 1, 1]), 1.0)
        self.assertAlmostEqual(class_cosine_gap(features, [0, 1, 0, 1]), -0.5)

    def test_random_encoders_leave_room_for_pretraining(self):
        dataset = generate(SynthConfig())
        config = TrainConfig(method="cocoa", batch_size=32)
        splits = DataSplits.from_dataset(dataset, seed=0)
        result = linear_probe(random_encoders(splits.train, config), splits, config)
        self.assertLess(result.test_f1, 0.9)


@unittest.skipUnless(RUN_SLOW, f"set {SLOW_TESTS_ENV}=1 to run full-length pretraining")
class TestPretrainedEmbeddings(unittest.TestCase):
    """Class structure of fused embeddings after COCOA pretraining"""

    def test_within_class_similarity_exceeds_between_class(self):
        dataset = generate(SynthConfig())
        config = TrainConfig(method="cocoa", batch_size=32, max_epochs=MAX_EPOCHS)
        splits = DataSplits.from_dataset(dataset, seed=0)
        pretrained = pretrain(splits, config).params
        trained_gap = class_cosine_gap(embed(pretrained, splits.test), splits.test.labels)
        random_gap = class_cosine_gap(embed(random_encoders(splits.train, config), splits.test),
                                      splits.test.labels)
        self.assertGreaterEqual(trained_gap, 0.2)
        self.assertGreater(trained_gap, random_gap)


if __name__ == '__main__':
    unittest.main()
