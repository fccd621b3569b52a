"""
Unit tests for windowing, batch sampling and dataset splits
"""

import unittest

import numpy as np

from cocoa.batching import (
    WindowedDataset, iterate_batches, make_windows, sample_batch, split_counts,
    split_dataset, stratified_subsample,
)
from cocoa.errors import (
    ConfigurationError, InputError, SamplingError, StratificationError,
)


def disjoint_dataset(n=100, window=4, labels=None, num_classes=3):
    rng = np.random.default_rng(n)
    return WindowedDataset(
        modality_names=["a", "b"],
        arrays=[rng.normal(size=(n, window, 2)), rng.normal(size=(n, window, 1))],
        window=window,
        labels=labels,
        classes=[f"c{c}" for c in range(num_classes)] if labels is not None else [],
    )


def overlapping_dataset(length=1000, window=40):
    stream = np.arange(length, dtype=float)
    return make_windows({"a": stream, "b": -stream}, window, overlap_fraction=0.5)


class TestMakeWindows(unittest.TestCase):
    """Sliding-window segmentation"""

    def test_half_overlap_starts(self):
        ds = make_windows({"acc": np.zeros((100, 3))}, 40, overlap_fraction=0.5)
        np.testing.assert_array_equal(ds.starts, [0, 20, 40, 60])
        self.assertEqual(ds.arrays[0].shape, (4, 40, 3))

    def test_no_overlap_tiles(self):
        stream = np.arange(100, dtype=float)
        ds = make_windows({"a": stream}, 25, overlap_fraction=0.0)
        np.testing.assert_array_equal(ds.starts, [0, 25, 50, 75])
        np.testing.assert_array_equal(ds.arrays[0].reshape(-1), stream)

    def test_window_equal_to_stream(self):
        ds = make_windows({"a": np.ones((30, 2)), "b": np.ones(30)}, 30)
        self.assertEqual(ds.num_windows, 1)
        self.assertEqual(ds.channels, [2, 1])

    def test_content_matches_stream(self):
        stream = np.arange(200, dtype=float).reshape(100, 2)
        ds = make_windows({"a": stream}, 10, overlap_fraction=0.5)
        for window, start in zip(ds.arrays[0], ds.starts):
            np.testing.assert_array_equal(window, stream[start:start + 10])

    def test_invalid_windows(self):
        with self.assertRaises(InputError):
            make_windows({"a": np.zeros(20)}, 21)
        with self.assertRaises(InputError):
            make_windows({"a": np.zeros(20), "b": np.zeros(19)}, 5)
        with self.assertRaises(ConfigurationError):
            make_windows({"a": np.zeros(20)}, 5, overlap_fraction=1.0)

    def test_majority_label(self):
        labels = np.array([0, 0, 0, 1] + [1, 1, 2, 2] + [2, 2, 1, 1])
        ds = make_windows({"a": np.zeros(12)}, 4, overlap_fraction=0.0, labels=labels,
                          classes=["x", "y", "z"])
        # second and third windows tie; the lower class wins
        np.testing.assert_array_equal(ds.labels, [0, 1, 1])
        self.assertEqual(ds.classes, ["x", "y", "z"])


class TestWindowedDataset(unittest.TestCase):
    """Dataset container operations"""

    def test_validate_labels(self):
        ds = disjoint_dataset(n=4, labels=np.array([0, 1, 2, 3]))
        with self.assertRaises(InputError):
            ds.validate()
        unlabelled_classes = WindowedDataset(["a"], [np.zeros((2, 3, 1))], 3, labels=np.array([0, 0]))
        with self.assertRaises(InputError):
            unlabelled_classes.validate()

    def test_select_and_subset(self):
        ds = disjoint_dataset(n=10, labels=np.arange(10) % 3)
        swapped = ds.select_modalities(["b", "a"])
        self.assertEqual(swapped.modality_names, ["b", "a"])
        np.testing.assert_array_equal(swapped.arrays[1], ds.arrays[0])
        with self.assertRaises(ConfigurationError):
            ds.select_modalities(["c"])
        part = ds.subset([7, 2])
        np.testing.assert_array_equal(part.window_ids, [7, 2])
        np.testing.assert_array_equal(part.class_histogram(), [0, 1, 1])

    def test_content_hash(self):
        first = disjoint_dataset(n=6)
        second = disjoint_dataset(n=6)
        self.assertEqual(first.content_hash(), second.content_hash())
        second.arrays[1][0, 0, 0] += 1e-9
        self.assertNotEqual(first.content_hash(), second.content_hash())


class TestSampling(unittest.TestCase):
    """Guarded batch sampling"""

    def test_batch_has_no_overlapping_windows(self):
        ds = overlapping_dataset()
        for seed in range(5):
            with self.subTest(seed=seed):
                batch = sample_batch(ds, 12, seed)
                starts = ds.starts[batch.window_ids]
                gaps = np.abs(starts[:, None] - starts[None, :])[~np.eye(12, dtype=bool)]
                self.assertGreaterEqual(gaps.min(), ds.window)
                self.assertEqual(len(set(batch.window_ids)), 12)

    def test_modalities_stay_aligned(self):
        batch = sample_batch(overlapping_dataset(), 8, 1)
        a, b = batch.tensors
        np.testing.assert_array_equal(a, -b)

    def test_deterministic(self):
        ds = overlapping_dataset()
        np.testing.assert_array_equal(sample_batch(ds, 10, 42).window_ids, sample_batch(ds, 10, 42).window_ids)

    def test_not_enough_windows(self):
        ds = overlapping_dataset()
        # half-overlapping windows of length 40 over 1000 samples: at most 25 are disjoint
        with self.assertRaises(SamplingError):
            sample_batch(ds, 26, 0)
        with self.assertRaises(SamplingError):
            sample_batch(ds, ds.num_windows + 1, 0)

    def test_epoch_iteration(self):
        ds = disjoint_dataset(n=23)
        batches = list(iterate_batches(ds, 5, 3))
        self.assertEqual(len(batches), 4)
        seen = np.concatenate([b.window_ids for b in batches])
        self.assertEqual(len(np.unique(seen)), 20)
        with self.assertRaises(ConfigurationError):
            list(iterate_batches(ds, 1, 0))


class TestSplits(unittest.TestCase):
    """Temporal block splits and label subsampling"""

    def test_counts(self):
        self.assertEqual(split_counts(100, {"train": 0.72, "val": 0.08, "test": 0.2}),
                         {"train": 72, "val": 8, "test": 20})
        self.assertEqual(split_counts(10, {"train": 1.0}), {"train": 10, "val": 0, "test": 0})
        with self.assertRaises(ConfigurationError):
            split_counts(10, {"train": 0.5, "val": 0.2})
        with self.assertRaises(ConfigurationError):
            split_counts(10, {"train": 0.9, "holdout": 0.1})
        with self.assertRaises(ConfigurationError):
            split_counts(5, {"train": 0.95, "val": 0.05})

    def test_default_split_disjoint_windows(self):
        ds = disjoint_dataset()
        train, val, test = split_dataset(ds, rng_seed=0)
        self.assertEqual((train.num_windows, val.num_windows, test.num_windows), (72, 8, 20))
        ids = [set(part.window_ids) for part in (train, val, test)]
        self.assertFalse(ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
        self.assertEqual(ids[0] | ids[1] | ids[2], set(range(100)))

    def test_train_only(self):
        train, val, test = split_dataset(disjoint_dataset(n=20), {"train": 1.0, "val": 0.0, "test": 0.0})
        self.assertEqual((train.num_windows, val.num_windows, test.num_windows), (20, 0, 0))

    def test_deterministic(self):
        ds = disjoint_dataset()
        first = split_dataset(ds, rng_seed=7)
        second = split_dataset(ds, rng_seed=7)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.window_ids, b.window_ids)

    def test_overlapping_windows_never_cross_splits(self):
        ds = overlapping_dataset()
        parts = split_dataset(ds, rng_seed=3)
        for i in range(3):
            for j in range(i + 1, 3):
                if not parts[i].num_windows or not parts[j].num_windows:
                    continue
                gaps = np.abs(parts[i].starts[:, None] - parts[j].starts[None, :])
                self.assertGreaterEqual(gaps.min(), ds.window)
        self.assertLessEqual(sum(p.num_windows for p in parts), ds.num_windows)

    def test_overlapping_windows_purge_only_at_split_boundaries(self):
        ds = overlapping_dataset()
        self.assertEqual(ds.num_windows, 49)
        for seed in range(6):
            with self.subTest(seed=seed):
                train, val, test = split_dataset(ds, rng_seed=seed)
                # three boundaries, one half-overlapping neighbour each
                self.assertGreaterEqual(train.num_windows + val.num_windows + test.num_windows, 46)
                self.assertEqual(train.num_windows, 35)
                self.assertGreaterEqual(val.num_windows, 3)
                self.assertGreaterEqual(test.num_windows, 8)

    def test_stratified_subsample(self):
        labels = np.array([0] * 10 + [1] * 7 + [2] * 3)
        ds = disjoint_dataset(n=20, labels=labels)
        part = stratified_subsample(ds, 0.5, 0)
        counts = part.class_histogram()
        for c, total in enumerate([10, 7, 3]):
            self.assertLessEqual(abs(counts[c] - 0.5 * total), 1)
            self.assertGreaterEqual(counts[c], 1)
        np.testing.assert_array_equal(part.window_ids, stratified_subsample(ds, 0.5, 0).window_ids)
        self.assertIs(stratified_subsample(ds, 1.0, 0), ds)

    def test_stratification_errors(self):
        ds = disjoint_dataset(n=20, labels=np.array([0] * 10 + [1] * 7 + [2] * 3))
        with self.assertRaises(StratificationError):
            stratified_subsample(ds, 0.1, 0)
        with self.assertRaises(ConfigurationError):
            stratified_subsample(ds, 0.0, 0)
        with self.assertRaises(InputError):
            stratified_subsample(disjoint_dataset(n=5), 0.5, 0)


if __name__ == '__main__':
    unittest.main()
