"""Experiment configuration (defaults, key=value files, validation) and run
manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import platform
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__, kernels
from .errors import ConfigError
from .models import MODEL_KINDS
from .training import TrainConfig


@dataclass
class ExperimentConfig:
    model: str = "gru"
    # training
    epochs: int = 20
    batch_size: int = 128
    validation_split: float = 0.1
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    # architectures
    units: int = 50
    cnn_filters: int = 16
    cnn_kernel: int = 3
    pool_size: int = 2
    tcn_dilations: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    tcn_kernel: int = 3
    tcn_filters: int = 4
    tcn_dropout: float = 0.0
    # data protocol
    in_len: int = 10
    out_len: int = 10
    train_frac: float = 0.9
    value_column: str = "-1"

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.model not in MODEL_KINDS:
            problems.append(f"model must be one of {', '.join(MODEL_KINDS)} (got {self.model!r})")
        for name in ("epochs",):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        for name in ("batch_size", "units", "cnn_filters", "cnn_kernel", "pool_size",
                     "tcn_kernel", "tcn_filters", "in_len", "out_len"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        if not 0.0 <= self.validation_split < 1.0:
            problems.append("validation_split must lie in [0, 1)")
        if not 0.0 < self.train_frac < 1.0:
            problems.append("train_frac must lie strictly between 0 and 1")
        if not 0.0 <= self.tcn_dropout < 1.0:
            problems.append("tcn_dropout must lie in [0, 1)")
        if not self.tcn_dilations or any(d < 1 for d in self.tcn_dilations):
            problems.append("tcn_dilations must be a non-empty list of positive integers")
        if self.lr <= 0 or self.eps <= 0:
            problems.append("lr and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            problems.append("beta1 and beta2 must lie in [0, 1)")
        if self.pool_size > self.in_len:
            problems.append("pool_size cannot exceed in_len")
        if problems:
            raise ConfigError(problems)
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.validation_split, self.lr,
                           self.beta1, self.beta2, self.eps, self.seed, self.shuffle)

    def model_hyperparams(self) -> dict:
        if self.model == "cnn":
            return {"filters": self.cnn_filters, "kernel_size": self.cnn_kernel,
                    "pool_size": self.pool_size}
        if self.model == "tcn":
            return {"dilations": list(self.tcn_dilations), "kernel_size": self.tcn_kernel,
                    "filters": self.tcn_filters, "dropout_rate": self.tcn_dropout}
        return {"units": self.units}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, raw, problems: list):
    default = getattr(ExperimentConfig(), name)
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, list):
            if isinstance(raw, (list, tuple)):
                return [int(v) for v in raw]
            return [int(v) for v in str(raw).replace(" ", "").strip("[]").split(",") if v]
        return type(default)(raw)
    except (TypeError, ValueError):
        problems.append(f"{name}: cannot interpret {raw!r} as {type(default).__name__}")
        return None


def parse_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    problems = []
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected key=value")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            problems.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        out[key] = value
    if problems:
        raise ConfigError(problems)
    return out


def resolve_config(file_values: dict | None = None, flag_values: dict | None = None) -> ExperimentConfig:
    """Merge defaults < config file < command-line flags, then validate."""
    merged = {}
    problems = []
    for source in (file_values or {}, flag_values or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in _FIELDS:
                problems.append(f"unknown setting {key!r}")
                continue
            val = _coerce(key, raw, problems)
            if val is not None:
                merged[key] = val
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**merged).validate()


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(path, command: str, config: dict, data_fingerprint: str | None,
                   timings: dict, outputs: list[str]) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "kernel_backend": kernels.backend(),
        "python": platform.python_version(),
        "config": config,
        "data_fingerprint": data_fingerprint,
        "timings": timings,
        "outputs": sorted(outputs),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path
