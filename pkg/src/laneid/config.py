"""
Configuration Management Module
Run configuration for training and evaluation, loaded from and saved to JSON.
JSON keys mirror the dataclass field names; a partial file overrides the
defaults section by section.
"""

from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Optional
import json
from dataclasses import dataclass, asdict, field, fields

from .augment import AugmentConfig
from .brightness import BrightnessConfig
from .decision import DecisionConfig
from .errors import ConfigError
from .model import ModelConfig
from .paths import CHECKPOINTS, CORPORA, DATA, REPORTS


@dataclass
class OptimizerConfig:
    """Adam and learning-rate schedule settings"""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    schedule_scale: float = 0.01
    schedule_start: int = 150_000
    schedule_every: int = 20_000


@dataclass
class ObjectiveConfig:
    """Loss settings"""
    z_offset: float = 0.0


@dataclass
class PathsConfig:
    """Where corpora, checkpoints and reports live"""
    train_corpus: str = str(CORPORA / "train")
    test_corpus: str = str(CORPORA / "test")
    checkpoint: str = str(CHECKPOINTS / "model.ckpt")
    reports: str = str(REPORTS)


@dataclass
class RunConfig:
    """Main run configuration"""
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    brightness: BrightnessConfig = field(default_factory=BrightnessConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    batch_size: int = 2
    sequence_length: int = 4
    iterations: int = 2000
    seed: int = 0
    log_every: int = 50
    version: str = "1.0"

    def validate(self) -> "RunConfig":
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.sequence_length < 1:
            raise ConfigError(f"sequence_length must be >= 1, got {self.sequence_length}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        opt = self.optimizer
        if opt.lr <= 0 or not 0 <= opt.beta1 < 1 or not 0 <= opt.beta2 < 1 or opt.weight_decay < 0 or opt.eps <= 0:
            raise ConfigError(f"invalid optimizer settings: {asdict(opt)}")
        if opt.schedule_scale <= 0 or opt.schedule_start < 0 or opt.schedule_every < 1:
            raise ConfigError(f"invalid learning-rate schedule: {asdict(opt)}")
        self.model.validate()
        self.augment.validate()
        self.brightness.validate()
        self.decision.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_SECTIONS = {
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "augment": AugmentConfig,
    "brightness": BrightnessConfig,
    "decision": DecisionConfig,
    "objective": ObjectiveConfig,
    "paths": PathsConfig,
}


def _section(cls, data: Dict[str, Any], name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in section '{name}': {sorted(unknown)}")
    return cls(**data)


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a (possibly partial) dict; unknown keys are errors."""
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    values = {}
    for key, value in data.items():
        if key in _SECTIONS:
            values[key] = _section(_SECTIONS[key], value, key)
        else:
            values[key] = value
    try:
        return RunConfig(**values).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from e


class ConfigManager:
    """Manages the run configuration file"""

    def __init__(self, config_path: Optional[Path] = None):
        if config_path is None:
            config_path = DATA / "config.json"
        self.config_path = Path(config_path)
        self.config = self.load()

    def load(self) -> RunConfig:
        """Load configuration from file, or the defaults when there is none"""
        if not self.config_path.exists():
            return RunConfig()
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"failed to read {self.config_path}: {e}") from e
        try:
            return run_config_from_dict(data)
        except ConfigError as e:
            raise ConfigError(f"{self.config_path}: {e}") from e

    def save(self, config: Optional[RunConfig] = None) -> Path:
        """Save configuration to file"""
        if config is not None:
            self.config = config
        return self.export_config(self.config_path)

    def export_config(self, path: Path) -> Path:
        """Write the current config to a specific path"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.config.to_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")
        return path

    def reset_to_defaults(self) -> Path:
        self.config = RunConfig()
        return self.save()


def load_run_config(path: Optional[Path] = None) -> RunConfig:
    """Load a run config; a missing explicit path is an error."""
    if path is not None and not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    return ConfigManager(path).config


# Global config manager instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get or create the global config manager"""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager
