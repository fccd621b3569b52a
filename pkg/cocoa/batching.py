"""
Windowed multimodal datasets, aligned batches and train/val/test splits

Positive pairs are the aligned modality readings of one window; negative
pairs are distinct windows of a batch. Windows whose raw-time spans overlap
never share a batch, so no negative pair is a near-duplicate of itself.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .constants import DEFAULT_OVERLAP, SPLIT_BLOCKS, SPLIT_FRACTIONS
from .errors import ConfigurationError, InputError, SamplingError, StratificationError

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, None]


@dataclass
class ModalityBatch:
    """N temporally aligned windows across V modalities."""

    modalities: List[Tuple[str, np.ndarray]]
    window_ids: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def modality_names(self) -> List[str]:
        return [name for name, _ in self.modalities]

    @property
    def tensors(self) -> List[np.ndarray]:
        return [array for _, array in self.modalities]

    @property
    def num_samples(self) -> int:
        return int(len(self.window_ids))

    def validate(self) -> None:
        n = self.num_samples
        for name, array in self.modalities:
            if array.ndim != 3 or array.shape[0] != n:
                raise ConfigurationError(
                    f"modality '{name}' has shape {array.shape}, expected {n} x window x channels")
        if len(np.unique(self.window_ids)) != n:
            raise InputError("window_ids within a batch must be pairwise distinct")
        if self.labels is not None and len(self.labels) != n:
            raise InputError(f"batch has {n} windows but {len(self.labels)} labels")

    def permute(self, order: Sequence[int]) -> "ModalityBatch":
        order = np.asarray(order, dtype=np.int64)
        return ModalityBatch(
            modalities=[(name, array[order]) for name, array in self.modalities],
            window_ids=self.window_ids[order],
            labels=None if self.labels is None else self.labels[order],
        )


@dataclass
class WindowedDataset:
    """
    Fixed-length windows of V aligned modality streams.

    ``starts`` holds each window's raw-time start sample; ``window`` is the
    shared window length. Arrays are float64, num_windows x window x channels.
    """

    modality_names: List[str]
    arrays: List[np.ndarray]
    window: int
    labels: Optional[np.ndarray] = None
    classes: List[str] = field(default_factory=list)
    window_ids: Optional[np.ndarray] = None
    starts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.modality_names = list(self.modality_names)
        self.arrays = [np.asarray(a, dtype=np.float64) for a in self.arrays]
        self.classes = list(self.classes)
        n = self.arrays[0].shape[0] if self.arrays else 0
        if self.window_ids is None:
            self.window_ids = np.arange(n, dtype=np.int64)
        self.window_ids = np.asarray(self.window_ids, dtype=np.int64)
        if self.starts is None:
            self.starts = self.window_ids * self.window
        self.starts = np.asarray(self.starts, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def num_windows(self) -> int:
        return int(len(self.window_ids))

    @property
    def num_modalities(self) -> int:
        return len(self.modality_names)

    @property
    def channels(self) -> List[int]:
        return [int(a.shape[2]) for a in self.arrays]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def validate(self) -> None:
        """Check shapes, alignment and label consistency."""
        if not self.modality_names:
            raise ConfigurationError("dataset declares no modalities")
        if len(self.modality_names) != len(self.arrays):
            raise ConfigurationError(
                f"{len(self.modality_names)} modality names for {len(self.arrays)} arrays")
        if len(set(self.modality_names)) != len(self.modality_names):
            raise ConfigurationError(f"duplicate modality names: {self.modality_names}")
        n = self.num_windows
        for name, array in zip(self.modality_names, self.arrays):
            if array.ndim != 3 or array.shape[0] != n or array.shape[1] != self.window or array.shape[2] < 1:
                raise ConfigurationError(
                    f"modality '{name}' has shape {array.shape}, expected ({n}, {self.window}, channels>0)")
        if len(self.starts) != n:
            raise ConfigurationError(f"{len(self.starts)} window starts for {n} windows")
        if len(np.unique(self.window_ids)) != n:
            raise InputError("window_ids must be pairwise distinct")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise InputError(f"expected {n} labels, got shape {self.labels.shape}")
            if not self.classes:
                raise InputError("labels are present but the class list is empty")
            if n and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
                raise InputError(
                    f"label values must lie in [0, {len(self.classes)}), "
                    f"got range [{self.labels.min()}, {self.labels.max()}]")

    def subset(self, indices: Sequence[int]) -> "WindowedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return WindowedDataset(
            modality_names=self.modality_names,
            arrays=[a[indices] for a in self.arrays],
            window=self.window,
            labels=None if self.labels is None else self.labels[indices],
            classes=self.classes,
            window_ids=self.window_ids[indices],
            starts=self.starts[indices],
        )

    def select_modalities(self, names: Sequence[str]) -> "WindowedDataset":
        """Keep only ``names``, in the given order."""
        missing = [name for name in names if name not in self.modality_names]
        if missing:
            raise ConfigurationError(f"unknown modalities {missing}; dataset has {self.modality_names}")
        positions = [self.modality_names.index(name) for name in names]
        return WindowedDataset(
            modality_names=list(names),
            arrays=[self.arrays[p] for p in positions],
            window=self.window,
            labels=self.labels,
            classes=self.classes,
            window_ids=self.window_ids,
            starts=self.starts,
        )

    def class_histogram(self) -> np.ndarray:
        if self.labels is None:
            raise InputError("dataset has no labels")
        return np.bincount(self.labels, minlength=len(self.classes))

    def batch(self, indices: Sequence[int]) -> ModalityBatch:
        indices = np.asarray(indices, dtype=np.int64)
        return ModalityBatch(
            modalities=[(name, array[indices]) for name, array in zip(self.modality_names, self.arrays)],
            window_ids=self.window_ids[indices],
            labels=None if self.labels is None else self.labels[indices],
        )

    def full_batch(self) -> ModalityBatch:
        return self.batch(np.arange(self.num_windows))

    def content_hash(self) -> str:
        """sha256 over every field; equal hashes mean bit-identical datasets."""
        digest = hashlib.sha256()
        digest.update("\x1f".join(self.modality_names).encode("utf-8"))
        digest.update("\x1f".join(self.classes).encode("utf-8"))
        digest.update(np.int64(self.window).tobytes())
        for array in self.arrays:
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        if self.labels is not None:
            digest.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        digest.update(np.ascontiguousarray(self.window_ids, dtype="<i8").tobytes())
        digest.update(np.ascontiguousarray(self.starts, dtype="<i8").tobytes())
        return digest.hexdigest()


def window_stride(window: int, overlap_fraction: float) -> int:
    if not 0.0 <= overlap_fraction < 1.0:
        raise ConfigurationError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    return max(1, int(round(window * (1.0 - overlap_fraction))))


def make_windows(streams: Mapping[str, np.ndarray], window: int,
                 overlap_fraction: float = DEFAULT_OVERLAP,
                 labels: Optional[Sequence[int]] = None,
                 classes: Optional[Sequence[str]] = None) -> WindowedDataset:
    """
    Cut aligned T x C streams into sliding windows.

    Args:
        streams: Modality name -> T x C array (1-D arrays are one channel)
        window: Window length in samples
        overlap_fraction: Fraction of a window shared with its successor
        labels: Optional per-sample class index, length T
        classes: Class names; defaults to the label values as strings

    Returns:
        WindowedDataset: Windows starting at multiples of the stride; a
        window's label is the majority over its span, ties to the lower index
    """
    if not streams:
        raise ConfigurationError("make_windows needs at least one stream")
    arrays = {name: np.asarray(s, dtype=np.float64) for name, s in streams.items()}
    arrays = {name: a[:, None] if a.ndim == 1 else a for name, a in arrays.items()}
    lengths = {a.shape[0] for a in arrays.values()}
    if len(lengths) != 1:
        raise InputError(f"streams are not aligned, lengths {sorted(lengths)}")
    t = lengths.pop()
    if window < 1 or window > t:
        raise InputError(f"window {window} does not fit a stream of length {t}")

    stride = window_stride(window, overlap_fraction)
    count = (t - window) // stride + 1
    starts = np.arange(count, dtype=np.int64) * stride

    windowed = []
    for a in arrays.values():
        # sliding_window_view gives (T - window + 1, C, window)
        views = sliding_window_view(a, window, axis=0)[starts]
        windowed.append(np.ascontiguousarray(views.transpose(0, 2, 1)))

    window_labels = None
    class_names: List[str] = list(classes) if classes is not None else []
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (t,):
            raise InputError(f"expected {t} per-sample labels, got shape {labels.shape}")
        num_classes = len(class_names) if class_names else int(labels.max()) + 1
        if not class_names:
            class_names = [str(c) for c in range(num_classes)]
        window_labels = np.array(
            [np.bincount(labels[s:s + window], minlength=num_classes).argmax() for s in starts],
            dtype=np.int64)

    dataset = WindowedDataset(
        modality_names=list(arrays.keys()),
        arrays=windowed,
        window=window,
        labels=window_labels,
        classes=class_names,
        window_ids=np.arange(count, dtype=np.int64),
        starts=starts,
    )
    dataset.validate()
    return dataset


def _draw_non_overlapping(starts: np.ndarray, window: int, order: Sequence[int], size: int) -> List[int]:
    """Greedily take indices from ``order`` whose spans overlap none already taken."""
    chosen: List[int] = []
    chosen_starts = np.empty(size, dtype=np.int64)
    for index in order:
        s = starts[index]
        k = len(chosen)
        if k and np.abs(chosen_starts[:k] - s).min() < window:
            continue
        chosen_starts[k] = s
        chosen.append(int(index))
        if len(chosen) == size:
            break
    return chosen


def sample_batch(dataset: WindowedDataset, batch_size: int, rng_seed: SeedLike) -> ModalityBatch:
    """
    Draw ``batch_size`` windows uniformly without replacement.

    Raises:
        SamplingError: fewer than ``batch_size`` mutually non-overlapping windows
    """
    if batch_size < 1 or batch_size > dataset.num_windows:
        raise SamplingError(f"batch_size {batch_size} exceeds the {dataset.num_windows} available windows")
    rng = np.random.default_rng(rng_seed)
    chosen = _draw_non_overlapping(dataset.starts, dataset.window,
                                   rng.permutation(dataset.num_windows), batch_size)
    if len(chosen) < batch_size:
        raise SamplingError(
            f"only {len(chosen)} mutually non-overlapping windows found, batch needs {batch_size}")
    return dataset.batch(chosen)


def iterate_batches(dataset: WindowedDataset, batch_size: int, rng: SeedLike) -> Iterator[ModalityBatch]:
    """
    One epoch of guard-respecting batches without replacement.

    The incomplete tail is dropped, so every batch has exactly ``batch_size``
    windows.
    """
    if batch_size < 2:
        raise ConfigurationError(f"batch_size must be at least 2, got {batch_size}")
    rng = np.random.default_rng(rng)
    pending = list(rng.permutation(dataset.num_windows))
    while len(pending) >= batch_size:
        chosen = _draw_non_overlapping(dataset.starts, dataset.window, pending, batch_size)
        if len(chosen) < batch_size:
            logger.debug("Dropping %d windows that cannot form a non-overlapping batch", len(pending))
            break
        taken = set(chosen)
        pending = [i for i in pending if i not in taken]
        yield dataset.batch(chosen)


def split_counts(num_windows: int, fractions: Mapping[str, float]) -> Dict[str, int]:
    for key in fractions:
        if key not in SPLIT_FRACTIONS:
            raise ConfigurationError(f"unknown split '{key}'; expected train, val and test")
    values = {key: float(fractions.get(key, 0.0)) for key in SPLIT_FRACTIONS}
    if any(v < 0 for v in values.values()) or abs(sum(values.values()) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be non-negative and sum to 1, got {values}")
    val = int(round(values["val"] * num_windows))
    test = int(round(values["test"] * num_windows))
    counts = {"train": num_windows - val - test, "val": val, "test": test}
    for key, count in counts.items():
        if values[key] > 0 and count <= 0:
            raise ConfigurationError(
                f"split '{key}' with fraction {values[key]} is empty for {num_windows} windows")
    return counts


def split_dataset(dataset: WindowedDataset, fractions: Optional[Mapping[str, float]] = None,
                  rng_seed: SeedLike = 0,
                  num_blocks: int = SPLIT_BLOCKS) -> Tuple[WindowedDataset, WindowedDataset, WindowedDataset]:
    """
    Split into train/val/test by contiguous temporal blocks.

    Windows are ordered by start time and cut into ``num_blocks`` contiguous
    blocks. The block sequence is rotated by a seeded offset and dealt out to
    train, val and test in that order, so every split is one contiguous run
    of the (cyclic) timeline and there are at most three split boundaries. A
    later-split window overlapping an earlier-split window in raw time is
    dropped, which only happens with overlapping windows.
    """
    counts = split_counts(dataset.num_windows, fractions or SPLIT_FRACTIONS)
    rng = np.random.default_rng(rng_seed)
    by_time = np.argsort(dataset.starts, kind="stable")
    blocks = np.array_split(by_time, max(1, min(num_blocks, dataset.num_windows)))
    offset = int(rng.integers(len(blocks)))
    sequence = np.concatenate(blocks[offset:] + blocks[:offset])

    assignment = np.empty(dataset.num_windows, dtype=np.int64)
    cut1 = counts["train"]
    cut2 = cut1 + counts["val"]
    assignment[sequence[:cut1]] = 0
    assignment[sequence[cut1:cut2]] = 1
    assignment[sequence[cut2:]] = 2

    keep = np.ones(dataset.num_windows, dtype=bool)
    starts = dataset.starts[by_time]
    for i, a in enumerate(by_time):
        j = i + 1
        while j < len(by_time) and starts[j] - starts[i] < dataset.window:
            b = by_time[j]
            if assignment[a] != assignment[b]:
                keep[a if assignment[a] > assignment[b] else b] = False
            j += 1
    purged = int((~keep).sum())
    if purged:
        logger.info("Purged %d windows overlapping a window of another split", purged)

    splits = []
    for code in range(3):
        members = np.flatnonzero((assignment == code) & keep)
        members = members[np.argsort(dataset.starts[members], kind="stable")]
        splits.append(dataset.subset(members))
    return splits[0], splits[1], splits[2]


def stratified_subsample(dataset: WindowedDataset, fraction: float, rng_seed: SeedLike) -> WindowedDataset:
    """Keep round(fraction * n_c) windows of every class c, chosen by seed."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"label fraction must lie in (0, 1], got {fraction}")
    if dataset.labels is None:
        raise InputError("stratified subsampling needs labels")
    if fraction == 1.0:
        return dataset
    rng = np.random.default_rng(rng_seed)
    chosen = []
    for c in range(len(dataset.classes)):
        members = np.flatnonzero(dataset.labels == c)
        if not len(members):
            continue
        k = int(np.floor(fraction * len(members) + 0.5))
        if k == 0:
            raise StratificationError(
                f"label fraction {fraction} keeps no window of class '{dataset.classes[c]}' "
                f"({len(members)} available)")
        chosen.append(rng.choice(members, size=k, replace=False))
    indices = np.sort(np.concatenate(chosen))
    return dataset.subset(indices)
