"""
On-disk format for windowed multimodal datasets and embedding exports

A dataset directory holds ``manifest.json`` plus headerless little-endian
files: one f32 tensor per modality (num_windows x window x channels), u32
labels, and u64 window ids and start samples.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .batching import WindowedDataset
from .constants import (
    DATASET_FORMAT_VERSION, EXPORT_DELIMITER, LABELS_FILE, MANIFEST_NAME,
    STARTS_FILE, WINDOW_IDS_FILE,
)
from .errors import CocoaError, ConfigurationError, CorruptionError, InputError, VersionError

logger = logging.getLogger(__name__)

EXPORT_SOURCES = ("raw", "ssl", "finetuned")


def _manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() or not path.suffix else path


def _write_array(path: Path, values: np.ndarray, dtype: str) -> None:
    try:
        np.ascontiguousarray(values, dtype=dtype).tofile(path)
    except OSError as e:
        raise CocoaError(f"Error writing {path}: {e}") from e


def write_dataset(dataset: WindowedDataset, directory: Union[str, Path]) -> Path:
    """
    Persist ``dataset`` under ``directory``.

    Args:
        dataset (WindowedDataset): Validated before anything is written
        directory: Target directory, created if needed

    Returns:
        Path: The manifest path
    """
    dataset.validate()
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CocoaError(f"Error creating {directory}: {e}") from e

    modality_files = {}
    for name, array in zip(dataset.modality_names, dataset.arrays):
        filename = f"{name}.f32"
        _write_array(directory / filename, array, "<f4")
        modality_files[name] = filename

    files = {"modalities": modality_files, "window_ids": WINDOW_IDS_FILE, "starts": STARTS_FILE}
    _write_array(directory / WINDOW_IDS_FILE, dataset.window_ids, "<u8")
    _write_array(directory / STARTS_FILE, dataset.starts, "<u8")
    if dataset.labels is not None:
        _write_array(directory / LABELS_FILE, dataset.labels, "<u4")
        files["labels"] = LABELS_FILE

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "modalities": [{"name": name, "channels": channels, "window": dataset.window}
                       for name, channels in zip(dataset.modality_names, dataset.channels)],
        "num_windows": dataset.num_windows,
        "classes": dataset.classes,
        "files": files,
    }
    path = directory / MANIFEST_NAME
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2)
    except OSError as e:
        raise CocoaError(f"Error writing {path}: {e}") from e
    logger.info("Wrote %d windows (%d modalities) to %s", dataset.num_windows, dataset.num_modalities, directory)
    return path


def _read_array(path: Path, dtype: str, count: int) -> np.ndarray:
    if not path.exists():
        raise CorruptionError(f"{path}: file listed in the manifest is missing")
    expected = count * np.dtype(dtype).itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise CorruptionError(f"{path}: expected {expected} bytes, found {actual}")
    return np.fromfile(path, dtype=dtype, count=count)


def _load_manifest(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except FileNotFoundError as e:
        raise InputError(f"Manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise CorruptionError(f"{path}: invalid manifest ({e})") from e

    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise VersionError(f"{path}: dataset format version {version}, expected {DATASET_FORMAT_VERSION}")
    for key in ("modalities", "num_windows", "classes", "files"):
        if key not in manifest:
            raise CorruptionError(f"{path}: manifest is missing '{key}'")
    if manifest["num_windows"] < 1:
        raise CorruptionError(f"{path}: num_windows must be at least 1")
    declared = [m["name"] for m in manifest["modalities"]]
    listed = manifest["files"].get("modalities", {})
    if sorted(declared) != sorted(listed) or len(set(declared)) != len(declared):
        raise CorruptionError(f"{path}: files must cover every declared modality exactly once")
    windows = {m["window"] for m in manifest["modalities"]}
    if len(windows) != 1:
        raise ConfigurationError(f"{path}: modalities declare different window lengths {sorted(windows)}")
    if any(m["channels"] < 1 for m in manifest["modalities"]):
        raise CorruptionError(f"{path}: channel counts must be positive")
    return manifest


def read_dataset(path: Union[str, Path]) -> WindowedDataset:
    """Load and validate a dataset from its manifest (or its directory)."""
    manifest_path = _manifest_path(path)
    manifest = _load_manifest(manifest_path)
    directory = manifest_path.parent
    n = int(manifest["num_windows"])
    files = manifest["files"]

    names, arrays = [], []
    window = int(manifest["modalities"][0]["window"])
    for entry in manifest["modalities"]:
        count = n * window * int(entry["channels"])
        raw = _read_array(directory / files["modalities"][entry["name"]], "<f4", count)
        names.append(entry["name"])
        arrays.append(raw.reshape(n, window, int(entry["channels"])).astype(np.float64))

    labels = None
    if "labels" in files:
        labels = _read_array(directory / files["labels"], "<u4", n).astype(np.int64)
    window_ids = np.arange(n, dtype=np.int64)
    if "window_ids" in files:
        window_ids = _read_array(directory / files["window_ids"], "<u8", n).astype(np.int64)
    starts = window_ids * window
    if "starts" in files:
        starts = _read_array(directory / files["starts"], "<u8", n).astype(np.int64)

    dataset = WindowedDataset(
        modality_names=names,
        arrays=arrays,
        window=window,
        labels=labels,
        classes=list(manifest["classes"]),
        window_ids=window_ids,
        starts=starts,
    )
    dataset.validate()
    logger.debug("Read %d windows from %s", n, manifest_path)
    return dataset


def export_embeddings(embeddings, labels: Optional[Sequence[int]], path: Union[str, Path],
                      column_prefix: str = "e") -> Path:
    """
    Write one row per sample: embedding values then the integer label.

    ``embeddings`` is an N x d matrix (e.g. from ``encode_concat``) or an
    EmbeddingSet, whose modality blocks are concatenated in order. Values are
    written with 17 significant digits.
    """
    matrix, columns = _as_matrix(embeddings, column_prefix)
    if labels is None:
        labels = np.full(len(matrix), -1, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(matrix):
        raise InputError(f"{len(matrix)} embedding rows but {len(labels)} labels")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([matrix, labels.astype(np.float64)])
    formats = ["%.17g"] * matrix.shape[1] + ["%d"]
    try:
        np.savetxt(path, table, fmt=formats, delimiter=EXPORT_DELIMITER,
                   header=EXPORT_DELIMITER.join(columns + ["label"]), comments="")
    except OSError as e:
        raise CocoaError(f"Error writing {path}: {e}") from e
    logger.info("Exported %d x %d embeddings to %s", matrix.shape[0], matrix.shape[1], path)
    return path


def _as_matrix(embeddings, prefix: str) -> Tuple[np.ndarray, List[str]]:
    if hasattr(embeddings, "embeddings") and hasattr(embeddings, "modality_names"):
        blocks = [np.asarray(z.data) for z in embeddings.embeddings]
        columns = [f"{name}_{i}" for name, block in zip(embeddings.modality_names, blocks)
                   for i in range(block.shape[1])]
        return np.concatenate(blocks, axis=1), columns
    matrix = np.asarray(getattr(embeddings, "data", embeddings), dtype=np.float64)
    if matrix.ndim != 2:
        raise ConfigurationError(f"embeddings must be an N x d matrix, got shape {matrix.shape}")
    return matrix, [f"{prefix}{i}" for i in range(matrix.shape[1])]


def load_embeddings(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Read an export back as (matrix, labels, embedding column names)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(EXPORT_DELIMITER)
    table = np.loadtxt(path, delimiter=EXPORT_DELIMITER, skiprows=1, ndmin=2)
    if table.shape[1] != len(header):
        raise CorruptionError(f"{path}: header names {len(header)} columns, rows have {table.shape[1]}")
    return table[:, :-1], table[:, -1].astype(np.int64), header[:-1]


def raw_features(dataset: WindowedDataset) -> np.ndarray:
    """Flattened windows of every modality, the 'raw' export source."""
    return np.concatenate([a.reshape(dataset.num_windows, -1) for a in dataset.arrays], axis=1)
