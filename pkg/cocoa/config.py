"""
Configuration files for the command line
A JSON tree with the sections ``train``, ``hyper``, ``encoder`` and
``synth``. Command-line flags override file values; unknown sections or keys
are rejected.
"""

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .constants import FILTER_COUNTS, FUSION_DIM, KERNEL_SIZES, PROJECTION_DIM
from .errors import ConfigurationError, InputError
from .losses import LossHyper
from .pipeline import TrainConfig
from .synthgen import SynthConfig

logger = logging.getLogger(__name__)

ENCODER_DEFAULTS = {
    "kernel_sizes": list(KERNEL_SIZES),
    "filter_counts": list(FILTER_COUNTS),
    "projection_dim": PROJECTION_DIM,
    "fusion_dim": FUSION_DIM,
}

TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name not in ("hyper", "encoder"))
HYPER_KEYS = tuple(f.name for f in fields(LossHyper))
SYNTH_KEYS = tuple(f.name for f in fields(SynthConfig))
SECTIONS = {
    "train": TRAIN_KEYS,
    "hyper": HYPER_KEYS,
    "encoder": tuple(ENCODER_DEFAULTS),
    "synth": SYNTH_KEYS,
}


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


@dataclass
class CliConfig:
    """Parsed config file sections; every value is optional."""

    train: Dict[str, Any] = field(default_factory=dict)
    hyper: Dict[str, Any] = field(default_factory=dict)
    encoder: Dict[str, Any] = field(default_factory=dict)
    synth: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "config") -> "CliConfig":
        if not isinstance(data, dict):
            raise ConfigurationError(f"{source}: top level must be an object")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"{source}: unknown sections {sorted(unknown)}; expected {sorted(SECTIONS)}")
        for section, values in data.items():
            if not isinstance(values, dict):
                raise ConfigurationError(f"{source}: section '{section}' must be an object")
            bad = set(values) - set(SECTIONS[section])
            if bad:
                raise ConfigurationError(f"{source}: unknown keys in '{section}': {sorted(bad)}")
        return cls(**{section: dict(values) for section, values in data.items()})

    def train_config(self, overrides: Optional[Dict[str, Any]] = None,
                     hyper_overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
        """TrainConfig from file values, then non-None ``overrides``."""
        hyper = LossHyper(**{**self.hyper, **_drop_none(hyper_overrides or {})})
        values = {**self.train, **_drop_none(overrides or {})}
        return TrainConfig(hyper=hyper, encoder=dict(self.encoder), **values)

    def synth_config(self, overrides: Optional[Dict[str, Any]] = None) -> SynthConfig:
        return SynthConfig(**{**self.synth, **_drop_none(overrides or {})})


def load_config(path: Optional[Union[str, Path]]) -> CliConfig:
    """Read a config file; ``None`` gives an empty config."""
    if path is None:
        return CliConfig()
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError as e:
        raise InputError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    logger.debug("Loaded config %s", path)
    return CliConfig.from_dict(data, str(path))


def template() -> Dict[str, Dict[str, Any]]:
    """Every addressable key at its default value."""
    train = TrainConfig()
    synth = SynthConfig().to_dict()
    synth["factor_split"] = None
    return {
        "train": {key: getattr(train, key) for key in TRAIN_KEYS},
        "hyper": {key: getattr(train.hyper, key) for key in HYPER_KEYS},
        "encoder": dict(ENCODER_DEFAULTS),
        "synth": synth,
    }


def write_template(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(template(), indent=2) + "\n", encoding="utf-8")
    return path
