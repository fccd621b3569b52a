"""
Deterministic synthetic multimodal datasets

Every modality observes its own latent sinusoidal factors through a fixed
random channel mix. Within a modality, classes are represented by prototype
banks, and each modality confuses one pair of classes (a different pair per
modality). Only the fused view separates every class.

Besides white noise, every channel carries a nuisance oscillation of
``distractor_ratio * noise_std`` amplitude at a random frequency above the
class band. It changes from window to window and is independent across
modalities, so it swamps untrained features while carrying nothing that two
modalities of a window share.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics.pairwise import euclidean_distances

from .batching import WindowedDataset
from .constants import (
    SYNTH_AMPLITUDE_RANGE, SYNTH_CHANNELS, SYNTH_DISTRACTOR_RATIO, SYNTH_NOISE_STD, SYNTH_NUM_CLASSES,
    SYNTH_NUM_MODALITIES, SYNTH_SEGMENT_WINDOWS, SYNTH_WINDOW, SYNTH_WINDOWS_PER_CLASS,
)
from .errors import ConfigurationError, InputError

logger = logging.getLogger(__name__)


@dataclass
class SynthConfig:
    """Shape and randomness of a synthetic dataset."""

    num_classes: int = SYNTH_NUM_CLASSES
    num_modalities: int = SYNTH_NUM_MODALITIES
    channels_per_modality: int = SYNTH_CHANNELS
    window: int = SYNTH_WINDOW
    windows_per_class: int = SYNTH_WINDOWS_PER_CLASS
    noise_std: float = SYNTH_NOISE_STD
    distractor_ratio: float = SYNTH_DISTRACTOR_RATIO
    factor_split: Optional[List[List[int]]] = None
    segment_windows: int = SYNTH_SEGMENT_WINDOWS
    seed: int = 0

    def __post_init__(self):
        if self.factor_split is None:
            self.factor_split = [[2 * v, 2 * v + 1] for v in range(self.num_modalities)]
        self.factor_split = [list(map(int, factors)) for factors in self.factor_split]
        self.validate()

    @property
    def num_factors(self) -> int:
        return 2 * self.num_modalities

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.num_modalities < 2:
            raise ConfigurationError(f"num_modalities must be at least 2, got {self.num_modalities}")
        if self.channels_per_modality < 1 or self.windows_per_class < 1 or self.segment_windows < 1:
            raise ConfigurationError("channels_per_modality, windows_per_class and segment_windows must be positive")
        if self.noise_std < 0:
            raise ConfigurationError(f"noise_std must be non-negative, got {self.noise_std}")
        if self.distractor_ratio < 0:
            raise ConfigurationError(f"distractor_ratio must be non-negative, got {self.distractor_ratio}")
        if self.num_classes > self.window // 2 - 1:
            raise ConfigurationError(
                f"window {self.window} has too few frequency bins for {self.num_classes} classes")
        if len(self.factor_split) != self.num_modalities:
            raise ConfigurationError(
                f"factor_split lists {len(self.factor_split)} modalities, config has {self.num_modalities}")
        seen = set()
        for v, factors in enumerate(self.factor_split):
            if not factors:
                raise ConfigurationError(f"factor_split leaves modality {v} without a factor")
            for f in factors:
                if not 0 <= f < self.num_factors:
                    raise ConfigurationError(f"factor {f} of modality {v} is outside [0, {self.num_factors})")
                if f in seen:
                    raise ConfigurationError(f"factor {f} is assigned to more than one modality")
                seen.add(f)

    def to_dict(self) -> dict:
        return asdict(self)


def modality_names(num_modalities: int) -> List[str]:
    return [f"m{v}" for v in range(num_modalities)]


def prototype_map(num_classes: int, num_modalities: int) -> np.ndarray:
    """
    V x C table of the prototype each modality shows for each class.

    Modality v shows class (v + 1) mod C with the prototype of class v mod C.
    """
    table = np.tile(np.arange(num_classes), (num_modalities, 1))
    if num_classes < 3:
        logger.warning("With %d classes no modality can confuse a class pair; "
                       "single modalities separate every class", num_classes)
        return table
    for v in range(num_modalities):
        a, b = v % num_classes, (v + 1) % num_classes
        table[v, b] = table[v, a]
    return table


@dataclass
class _FactorBank:
    frequencies: np.ndarray  # factors x classes, integer cycles per window
    amplitudes: np.ndarray
    phases: np.ndarray
    mixing: List[np.ndarray] = field(default_factory=list)  # per modality, channels x factors


def class_band(config: SynthConfig) -> Tuple[int, int]:
    """Inclusive range of class factor frequencies, in cycles per window."""
    return 1, max(config.window // 4, config.num_classes)


def distractor_band(config: SynthConfig) -> Tuple[int, int]:
    """Inclusive range of nuisance frequencies; starts above the class band when the window allows."""
    nyquist = config.window // 2 - 1
    low = class_band(config)[1] + max(1, config.window // 8)
    return min(low, nyquist), nyquist


def _draw_bank(config: SynthConfig, rng: np.random.Generator) -> _FactorBank:
    c = config.num_classes
    low, high = class_band(config)
    candidates = np.arange(low, high + 1)
    frequencies = np.stack([rng.choice(candidates, size=c, replace=False) for _ in range(config.num_factors)])
    low, high = SYNTH_AMPLITUDE_RANGE
    amplitudes = rng.uniform(low, high, size=(config.num_factors, c))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(config.num_factors, c))
    mixing = [rng.normal(size=(config.channels_per_modality, len(factors)))
              for factors in config.factor_split]
    return _FactorBank(frequencies, amplitudes, phases, mixing)


def _timeline(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    segments = []
    for c in range(config.num_classes):
        remaining = config.windows_per_class
        while remaining > 0:
            size = min(config.segment_windows, remaining)
            segments.append(np.full(size, c, dtype=np.int64))
            remaining -= size
    order = rng.permutation(len(segments))
    return np.concatenate([segments[i] for i in order])


def _distractors(config: SynthConfig, rng: np.random.Generator, n: int):
    """N x W x C nuisance oscillations, one random frequency and phase per window and channel."""
    amplitude = config.distractor_ratio * config.noise_std
    if amplitude == 0:
        return 0.0
    low, high = distractor_band(config)
    shape = (n, 1, config.channels_per_modality)
    frequencies = rng.integers(low, high + 1, size=shape)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    t = np.arange(config.window, dtype=np.float64)[None, :, None]
    return amplitude * np.sin(2.0 * np.pi * frequencies * t / config.window + phases)


def generate(config: SynthConfig) -> WindowedDataset:
    """
    Build a labelled dataset of ``num_classes * windows_per_class`` windows.

    Windows are disjoint and laid out in class-homogeneous segments in seeded
    order. A per-window circular time shift is shared by all modalities, so
    with ``noise_std=0`` the windows of one class in one modality differ only
    in phase.
    """
    rng = np.random.default_rng(config.seed)
    bank = _draw_bank(config, rng)
    prototypes = prototype_map(config.num_classes, config.num_modalities)
    labels = _timeline(config, rng)
    n = len(labels)
    shifts = rng.integers(0, config.window, size=n)
    t = (np.arange(config.window)[None, :] + shifts[:, None]).astype(np.float64)

    arrays = []
    for v, factors in enumerate(config.factor_split):
        proto = prototypes[v, labels]
        latent = np.stack([
            bank.amplitudes[f, proto][:, None]
            * np.sin(2.0 * np.pi * bank.frequencies[f, proto][:, None] * t / config.window
                     + bank.phases[f, proto][:, None])
            for f in factors], axis=-1)
        signal = latent @ bank.mixing[v].T + _distractors(config, rng, n)
        noise = rng.normal(0.0, config.noise_std, size=signal.shape) if config.noise_std > 0 else 0.0
        # stored at f32 precision so the on-disk round trip is exact
        arrays.append((signal + noise).astype(np.float32).astype(np.float64))

    dataset = WindowedDataset(
        modality_names=modality_names(config.num_modalities),
        arrays=arrays,
        window=config.window,
        labels=labels,
        classes=[f"class{c}" for c in range(config.num_classes)],
        window_ids=np.arange(n, dtype=np.int64),
        starts=np.arange(n, dtype=np.int64) * config.window,
    )
    dataset.validate()
    logger.info("Generated %d windows, %d classes, %d modalities (seed %d)",
                n, config.num_classes, config.num_modalities, config.seed)
    return dataset


def spectral_features(dataset: WindowedDataset, modalities: Optional[Sequence[str]] = None) -> np.ndarray:
    """Per-window magnitude spectra of the chosen modalities, concatenated."""
    names = list(modalities) if modalities else dataset.modality_names
    blocks = []
    for name in names:
        if name not in dataset.modality_names:
            raise ConfigurationError(f"unknown modality '{name}'")
        array = dataset.arrays[dataset.modality_names.index(name)]
        spectrum = np.abs(np.fft.rfft(array, axis=1))
        blocks.append(spectrum.reshape(dataset.num_windows, -1))
    return np.concatenate(blocks, axis=1)


def nearest_neighbour_accuracy(features: np.ndarray, labels: Sequence[int]) -> float:
    """Leave-one-out 1-NN accuracy; ties go to the lowest index."""
    labels = np.asarray(labels)
    if len(labels) != len(features) or len(labels) < 2:
        raise InputError(f"need at least 2 labelled feature rows, got {len(features)} rows, {len(labels)} labels")
    distances = euclidean_distances(features, features)
    np.fill_diagonal(distances, np.inf)
    predictions = labels[np.argmin(distances, axis=1)]
    return float(np.mean(predictions == labels))


def separability_report(dataset: WindowedDataset) -> Tuple[List[float], float]:
    """Nearest-neighbour accuracy per single modality and for the fused view."""
    singles = [nearest_neighbour_accuracy(spectral_features(dataset, [name]), dataset.labels)
               for name in dataset.modality_names]
    fused = nearest_neighbour_accuracy(spectral_features(dataset), dataset.labels)
    return singles, fused
