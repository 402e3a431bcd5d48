"""Run configuration: strict JSON loading, flag overrides, effective-config output."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from ._accel import backend
from .heads import LossWeights
from .preprocess import PreprocessConfig, Strategy
from .synth import SynthConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSection:
    dim: int = 768
    hidden: int = 1024
    out_dim: int = 768
    dropout: float = 0.3


@dataclass(frozen=True)
class EncoderSection:
    kind: str = "synthetic"
    seed: int = 42

    def __post_init__(self):
        if self.kind not in ("synthetic", "bank"):
            raise ConfigError(f"encoder.kind must be 'synthetic' or 'bank', got {self.kind!r}")


@dataclass(frozen=True)
class PathsSection:
    manifest: str | None = None
    eval_manifest: str | None = None
    feature_bank: str | None = None
    output_dir: str | None = None


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSection = field(default_factory=ModelSection)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    paths: PathsSection = field(default_factory=PathsSection)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}
# internal switches that never appear in config files
_HIDDEN = {"preprocess": {"allow_any_budget"}}
_PROVENANCE = {"tool", "command", "arguments"}


def _coerce(value, typ, where):
    if typ in ("bool", bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    if typ in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ is Strategy or typ == "Strategy":
        try:
            return Strategy.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _section_fields(name):
    cls = type(_SECTIONS[name]())
    return cls, {f.name: f for f in dataclasses.fields(cls) if f.name not in _HIDDEN.get(name, ())}


def _build(name, values: dict, base=None):
    cls, fields = _section_fields(name)
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {k: _coerce(v, fields[k].type, f"{name}.{k}") for k, v in values.items()}
    try:
        return dataclasses.replace(base, **kwargs) if base is not None else cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    # provenance keys written alongside an effective config
    doc = {k: v for k, v in doc.items() if k not in _PROVENANCE}
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    parts = {}
    for name in _SECTIONS:
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be an object")
        parts[name] = _build(name, sec)
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise ConfigError(f"cannot read config file: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc)


def override(config: RunConfig, section: str, **values) -> RunConfig:
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return config
    return dataclasses.replace(config, **{section: _build(section, values, getattr(config, section))})


def config_to_dict(config: RunConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        _, fields = _section_fields(name)
        sec = getattr(config, name)
        d = {}
        for k in fields:
            v = getattr(sec, k)
            d[k] = v.value if isinstance(v, Strategy) else v
        out[name] = d
    out["tool"] = {"name": "genlie", "version": __version__, "backend": backend()}
    return out


def effective_config_text(config: RunConfig) -> str:
    """Canonical JSON (sorted keys, fixed separators) of every effective setting."""
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"
