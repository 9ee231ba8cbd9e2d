"""Training configuration and the optional flat config file.

Python 3.10 lacks tomllib, so a minimal reader for flat TOML covers the
config surface: one ``key = value`` per line, quoted strings, ints,
floats, booleans, and # comments. Tables/arrays are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .models import check_model_kind

STRATEGIES = ("none", "swa", "aswa", "snape")
OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    dataset_dir: str
    model: str = "complex"
    dim: int = 128
    epochs: int = 256
    optimizer: str = "adam"
    lr: float = 0.1
    batch_size: int = 1024
    strategy: str = "none"
    swa_start: int = 1
    seed: int = 0
    smoothing: float = 0.0
    val_every: int = 1
    val_sample: int = 0
    snape_cycles: int = 5
    snape_defer: float = 0.5
    out_dir: str | None = None
    plots: bool = True

    def validate(self) -> None:
        check_model_kind(self.model, self.dim)
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.swa_start < 1:
            raise ConfigError(f"swa_start must be >= 1, got {self.swa_start}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"smoothing must lie in [0, 1), got {self.smoothing}")
        if self.val_every < 1:
            raise ConfigError(f"val_every must be >= 1, got {self.val_every}")
        if self.val_sample < 0:
            raise ConfigError(f"val_sample must be >= 0, got {self.val_sample}")
        if self.snape_cycles < 1:
            raise ConfigError(f"snape_cycles must be >= 1, got {self.snape_cycles}")
        if not 0.0 < self.snape_defer < 1.0:
            raise ConfigError(f"snape_defer must lie in (0, 1), got {self.snape_defer}")

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _parse_value(raw: str, path, line_no: int):
    raw = raw.strip()
    if raw.startswith(('"', "'")):
        quote = raw[0]
        end = raw.find(quote, 1)
        if end < 0:
            raise ConfigError(f"{path}:{line_no}: unterminated string")
        tail = raw[end + 1 :].strip()
        if tail and not tail.startswith("#"):
            raise ConfigError(f"{path}:{line_no}: trailing characters after string")
        return raw[1:end]
    raw = raw.split("#", 1)[0].strip()
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{path}:{line_no}: cannot parse value {raw!r}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse a flat TOML config into a {field: value} dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                raise ConfigError(f"{path}:{line_no}: tables are not supported in run configs")
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            out[key] = _parse_value(value, path, line_no)
    return out


def build_train_config(file_path: str | Path | None, overrides: dict) -> TrainConfig:
    """Defaults, then config-file values, then explicit flag overrides."""
    values: dict = {}
    if file_path is not None:
        values.update(read_config_file(file_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "dataset_dir" not in values:
        raise ConfigError("a dataset directory is required (flag or config file)")
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg
