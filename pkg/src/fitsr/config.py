"""Line-oriented ``key=value`` configuration covering ModelConfig and TrainConfig."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .model import ModelConfig
from .tensor import ConfigError
from .train import TrainConfig


def _convert(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return type(default)(raw.strip())


def parse_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def _build(cls, pairs: dict[str, str]):
    kwargs = {}
    defaults = cls()
    for f in fields(cls):
        if f.name in pairs:
            try:
                kwargs[f.name] = _convert(pairs[f.name], getattr(defaults, f.name))
            except ValueError as exc:
                raise ConfigError(f"bad value for {f.name}: {exc}") from None
    return cls(**kwargs)


def parse_config(text: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse a config file body; unknown keys are rejected by name."""
    pairs = parse_pairs(text)
    known = {f.name for f in fields(ModelConfig)} | {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(pairs) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    mc = _build(ModelConfig, {k: v for k, v in pairs.items() if k in model_keys})
    tc = _build(TrainConfig, {k: v for k, v in pairs.items() if k in train_keys})
    return mc, tc


def load_config(path) -> tuple[ModelConfig, TrainConfig]:
    return parse_config(Path(path).read_text())


def format_config(cfg, extra: dict | None = None) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_model_config(text: str) -> tuple[ModelConfig, dict[str, str]]:
    """ModelConfig plus any leftover keys (iteration, seed) from a checkpoint block."""
    pairs = parse_pairs(text)
    model_keys = {f.name for f in fields(ModelConfig)}
    mc = _build(ModelConfig, {k: v for k, v in pairs.items() if k in model_keys})
    return mc, {k: v for k, v in pairs.items() if k not in model_keys}
