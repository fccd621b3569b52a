"""
Modality-specific temporal convolutional encoders

Every modality owns a stack of three valid convolutions (each followed by
ReLU and layer normalization), global average pooling over time and a
projection dense layer. One fusion dense layer is shared by all modalities.
"""

import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .batching import ModalityBatch
from .constants import (
    CHECKPOINT_CONFIG_NAME, CHECKPOINT_MAGIC, CHECKPOINT_NAME, CHECKPOINT_VERSION,
    FILTER_COUNTS, FUSION_DIM, KERNEL_SIZES, LAYER_NORM_EPS, PROJECTION_DIM,
)
from .errors import ConfigurationError, CorruptionError, InputError, VersionError
from .tensor import (
    DiffTensor, concat, conv1d, dense, global_avg_pool, layer_norm, relu,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the per-modality encoders and the shared fusion layer."""

    modality_names: Tuple[str, ...]
    input_channels: Tuple[int, ...]
    window_length: int
    kernel_sizes: Tuple[int, ...] = KERNEL_SIZES
    filter_counts: Tuple[int, ...] = FILTER_COUNTS
    projection_dim: int = PROJECTION_DIM
    fusion_dim: int = FUSION_DIM

    def __post_init__(self):
        object.__setattr__(self, "modality_names", tuple(self.modality_names))
        object.__setattr__(self, "input_channels", tuple(int(c) for c in self.input_channels))
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "filter_counts", tuple(int(f) for f in self.filter_counts))
        self.validate()

    def validate(self) -> None:
        if not self.modality_names:
            raise ConfigurationError("encoder needs at least one modality")
        if len(set(self.modality_names)) != len(self.modality_names):
            raise ConfigurationError(f"duplicate modality names: {self.modality_names}")
        if len(self.input_channels) != len(self.modality_names):
            raise ConfigurationError(
                f"{len(self.input_channels)} channel counts for {len(self.modality_names)} modalities")
        if any(c < 1 for c in self.input_channels):
            raise ConfigurationError(f"channel counts must be positive, got {self.input_channels}")
        if len(self.kernel_sizes) != len(self.filter_counts) or not self.kernel_sizes:
            raise ConfigurationError(
                f"kernel_sizes {self.kernel_sizes} and filter_counts {self.filter_counts} must be "
                f"non-empty and of equal length")
        if any(k < 1 for k in self.kernel_sizes) or any(f < 1 for f in self.filter_counts):
            raise ConfigurationError("kernel sizes and filter counts must be positive")
        if self.projection_dim < 1 or self.fusion_dim < 1:
            raise ConfigurationError("projection_dim and fusion_dim must be positive")
        shrink = sum(self.kernel_sizes) - len(self.kernel_sizes)
        if self.window_length <= shrink:
            raise ConfigurationError(
                f"window_length {self.window_length} leaves no time step after the convolutions "
                f"(needs more than {shrink})")

    @property
    def num_modalities(self) -> int:
        return len(self.modality_names)

    @property
    def output_length(self) -> int:
        return self.window_length - sum(self.kernel_sizes) + len(self.kernel_sizes)

    def channels_of(self, modality: str) -> int:
        return self.input_channels[self.modality_names.index(modality)]

    def to_dict(self) -> dict:
        data = asdict(self)
        return {key: list(value) if isinstance(value, tuple) else value for key, value in data.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown encoder config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def for_dataset(cls, dataset, **overrides) -> "EncoderConfig":
        return cls(modality_names=tuple(dataset.modality_names),
                   input_channels=tuple(dataset.channels),
                   window_length=dataset.window, **overrides)


@dataclass
class EncoderParams:
    """Named trainable tensors of all branches plus the shared fusion layer."""

    config: EncoderConfig
    tensors: "OrderedDict[str, DiffTensor]" = field(default_factory=OrderedDict)

    def __iter__(self) -> Iterator[DiffTensor]:
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    def __getitem__(self, name: str) -> DiffTensor:
        return self.tensors[name]

    @property
    def names(self) -> List[str]:
        return list(self.tensors.keys())

    def trainable(self) -> List[DiffTensor]:
        return list(self.tensors.values())

    def branch(self, modality: str) -> Dict[str, DiffTensor]:
        prefix = f"{modality}."
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, OrderedDict(
            (name, DiffTensor(t.data, requires_grad=t.requires_grad)) for name, t in self.tensors.items()))

    def freeze(self) -> "EncoderParams":
        """A copy whose tensors are never recorded on a tape."""
        return EncoderParams(self.config, OrderedDict(
            (name, DiffTensor(t.data)) for name, t in self.tensors.items()))

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))


@dataclass
class EmbeddingSet:
    """Per-modality N x d embeddings z_v, in modality declaration order."""

    modality_names: List[str]
    embeddings: List[DiffTensor]

    @property
    def num_modalities(self) -> int:
        return len(self.embeddings)

    @property
    def num_samples(self) -> int:
        return self.embeddings[0].shape[0] if self.embeddings else 0

    @property
    def dim(self) -> int:
        return self.embeddings[0].shape[1] if self.embeddings else 0

    def __getitem__(self, index: int) -> DiffTensor:
        return self.embeddings[index]

    def as_array(self) -> np.ndarray:
        """V x N x d copy of the values."""
        return np.stack([z.data for z in self.embeddings])

    @classmethod
    def from_array(cls, values: np.ndarray, modality_names: Optional[Sequence[str]] = None,
                   requires_grad: bool = False) -> "EmbeddingSet":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ConfigurationError(f"embeddings must be V x N x d, got shape {values.shape}")
        names = list(modality_names) if modality_names else [f"m{v}" for v in range(values.shape[0])]
        return cls(names, [DiffTensor(v, requires_grad=requires_grad) for v in values])


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: EncoderConfig, seed: int = 0) -> EncoderParams:
    """
    Fan-in scaled uniform weights, zero biases, unit layer-norm gains.

    Args:
        config (EncoderConfig): Architecture
        seed (int): Seed of the initialisation RNG

    Returns:
        EncoderParams: Trainable parameters in a fixed name order
    """
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, DiffTensor]" = OrderedDict()

    def put(name: str, values: np.ndarray):
        tensors[name] = DiffTensor(values, requires_grad=True)

    for modality, channels in zip(config.modality_names, config.input_channels):
        c_in = channels
        for i, (k, c_out) in enumerate(zip(config.kernel_sizes, config.filter_counts)):
            put(f"{modality}.conv{i}.kernel", _uniform(rng, (k, c_in, c_out), k * c_in))
            put(f"{modality}.conv{i}.bias", np.zeros(c_out))
            put(f"{modality}.ln{i}.gain", np.ones(c_out))
            put(f"{modality}.ln{i}.shift", np.zeros(c_out))
            c_in = c_out
        put(f"{modality}.proj.weight", _uniform(rng, (c_in, config.projection_dim), c_in))
        put(f"{modality}.proj.bias", np.zeros(config.projection_dim))
    put("fusion.weight", _uniform(rng, (config.projection_dim, config.fusion_dim), config.projection_dim))
    put("fusion.bias", np.zeros(config.fusion_dim))
    return EncoderParams(config, tensors)


def parameter_count(config: EncoderConfig) -> int:
    """Number of scalar parameters implied by ``config``."""
    total = 0
    for channels in config.input_channels:
        c_in = channels
        for k, c_out in zip(config.kernel_sizes, config.filter_counts):
            total += k * c_in * c_out + c_out + 2 * c_out
            c_in = c_out
        total += c_in * config.projection_dim + config.projection_dim
    total += config.projection_dim * config.fusion_dim + config.fusion_dim
    return total


def _check_window(config: EncoderConfig, modality: str, window) -> None:
    expected = (config.window_length, config.channels_of(modality))
    if window.ndim != 3 or tuple(window.shape[1:]) != expected:
        raise ConfigurationError(
            f"modality '{modality}': expected N x {expected[0]} x {expected[1]} input, got {tuple(window.shape)}")


def project(params: EncoderParams, modality: str, window) -> DiffTensor:
    """Pre-fusion projection of one modality's N x W x C windows."""
    config = params.config
    if modality not in config.modality_names:
        raise ConfigurationError(f"unknown modality '{modality}'; encoder has {list(config.modality_names)}")
    x = window if isinstance(window, DiffTensor) else DiffTensor(window)
    _check_window(config, modality, x)
    for i in range(len(config.kernel_sizes)):
        x = conv1d(x, params[f"{modality}.conv{i}.kernel"], params[f"{modality}.conv{i}.bias"])
        x = relu(x)
        x = layer_norm(x, params[f"{modality}.ln{i}.gain"], params[f"{modality}.ln{i}.shift"], LAYER_NORM_EPS)
    pooled = global_avg_pool(x)
    return dense(pooled, params[f"{modality}.proj.weight"], params[f"{modality}.proj.bias"])


def _batch_inputs(params: EncoderParams, batch: ModalityBatch) -> List[Tuple[str, np.ndarray]]:
    config = params.config
    names = batch.modality_names
    if list(names) != list(config.modality_names):
        raise ConfigurationError(
            f"batch modalities {names} do not match encoder modalities {list(config.modality_names)}")
    return batch.modalities


def encode(params: EncoderParams, batch: ModalityBatch) -> EmbeddingSet:
    """Fused embeddings z_v for every modality v of the batch."""
    embeddings = []
    for modality, window in _batch_inputs(params, batch):
        projected = project(params, modality, window)
        embeddings.append(dense(projected, params["fusion.weight"], params["fusion.bias"]))
    return EmbeddingSet(list(params.config.modality_names), embeddings)


def encode_concat(params: EncoderParams, batch: ModalityBatch) -> DiffTensor:
    """N x (V * fusion_dim) classifier input, modality blocks in declaration order."""
    z = encode(params, batch)
    if z.num_modalities == 1:
        return z.embeddings[0]
    return concat(z.embeddings, axis=1)


def params_hash(params: EncoderParams) -> str:
    """sha256 over parameter names, shapes and values."""
    digest = hashlib.sha256()
    for name, tensor in params.tensors.items():
        digest.update(name.encode("utf-8"))
        digest.update(np.asarray(tensor.shape, dtype="<u4").tobytes())
        digest.update(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def write_tensors(path: Path, tensors: "OrderedDict[str, np.ndarray]") -> Path:
    """Write named arrays as magic, u32 version, then length-prefixed records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, values in tensors.items():
            encoded = name.encode("utf-8")
            values = np.asarray(values, dtype="<f8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<I", values.ndim))
            handle.write(struct.pack(f"<{values.ndim}I", *values.shape))
            handle.write(np.ascontiguousarray(values).tobytes())
    return path


def read_tensors(path: Path) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8 or blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptionError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: checkpoint format version {version}, expected {CHECKPOINT_VERSION}")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 8

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise CorruptionError(
                f"{path}: truncated while reading {what} (need {offset + size} bytes, file has {len(blob)})")
        chunk = blob[offset:offset + size]
        offset += size
        return chunk

    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"rank of '{name}'"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"shape of '{name}'"))
        count = int(np.prod(shape)) if ndim else 1
        payload = take(8 * count, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return tensors


def save_checkpoint(params: EncoderParams, directory: Path) -> Path:
    """Write ``encoder.bin`` plus the ``encoder.json`` config sidecar."""
    directory = Path(directory)
    path = write_tensors(directory / CHECKPOINT_NAME,
                         OrderedDict((name, t.data) for name, t in params.tensors.items()))
    with open(directory / CHECKPOINT_CONFIG_NAME, "w", encoding="utf-8") as handle:
        json.dump(params.config.to_dict(), handle, indent=2)
    logger.info("Saved encoder checkpoint to %s", path)
    return path


def load_checkpoint(directory: Path) -> EncoderParams:
    directory = Path(directory)
    config_path = directory / CHECKPOINT_CONFIG_NAME
    try:
        with open(config_path, "r", encoding="utf-8") as handle:
            config = EncoderConfig.from_dict(json.load(handle))
    except FileNotFoundError as e:
        raise InputError(f"No encoder checkpoint in {directory} (missing {CHECKPOINT_CONFIG_NAME})") from e
    except json.JSONDecodeError as e:
        raise CorruptionError(f"{config_path}: invalid JSON ({e})") from e

    if not (directory / CHECKPOINT_NAME).exists():
        raise InputError(f"No encoder weights in {directory} (missing {CHECKPOINT_NAME})")
    stored = read_tensors(directory / CHECKPOINT_NAME)
    expected = init_params(config, seed=0)
    if list(stored.keys()) != expected.names:
        raise CorruptionError(
            f"{directory / CHECKPOINT_NAME}: parameter names do not match the encoder config")
    for name, values in stored.items():
        if values.shape != expected[name].shape:
            raise CorruptionError(
                f"{directory / CHECKPOINT_NAME}: '{name}' has shape {values.shape}, "
                f"expected {expected[name].shape}")
        expected[name].data = values.copy()
    return expected
