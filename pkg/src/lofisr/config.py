"""Pipeline configuration: strict JSON in, validated dataclasses out.

Unknown keys are rejected by name rather than ignored, since a silently
dropped key (say, "lamda") is the classic way a scientific config goes
wrong.  Defaults reproduce the full-scale setup: loss weight 0.25,
T1 target spacing 1.6x1.6x5.0 mm, T2 target spacing 1.5x1.5x5.0 mm,
learning rate 1e-4, 200000 iterations, 160^3 crops.  Toy runs override via
JSON.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "DeformationConfig",
    "GeneratorConfig",
    "NetworkConfig",
    "TrainingConfig",
    "PipelineConfig",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "save_config",
]

MAX_SEED = 2 ** 64  # seeds are 64-bit unsigned


@dataclass(frozen=True)
class DeformationConfig:
    rotation_deg: float = 15.0
    scaling: tuple[float, float] = (0.85, 1.15)
    translation_mm: float = 10.0
    warp_control_points: int = 5
    warp_std_mm: float = 3.0


@dataclass(frozen=True)
class GeneratorConfig:
    deformation: DeformationConfig = field(default_factory=DeformationConfig)
    t1_spacing: tuple[float, float, float] = (1.6, 1.6, 5.0)
    t2_spacing: tuple[float, float, float] = (1.5, 1.5, 5.0)
    noise_sigma_range: tuple[float, float] = (0.01, 0.10)
    bias_control_points: int = 4
    bias_log_std: float = 0.3


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 5
    base_filters: int = 24


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    iterations: int = 200_000
    crop_size: int = 160
    batch_size: int = 1
    segmenter_dice_floor: float = 0.8


@dataclass(frozen=True)
class PipelineConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    loss_weight: float = 0.25  # JSON key "lambda"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 0


# JSON spelling of fields whose Python name differs.
_JSON_ALIASES = {"loss_weight": "lambda"}
_FIELD_FOR_KEY = {v: k for k, v in _JSON_ALIASES.items()}


def _is_config_class(tp) -> bool:
    return dataclasses.is_dataclass(tp) and isinstance(tp, type)


def _coerce(value, tp, path: str):
    origin = getattr(tp, "__origin__", None)
    if _is_config_class(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected an array")
        args = tp.__args__
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    raise ConfigError(f"{path}: unsupported config field type {tp}")


def _build(cls, obj: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        name = _FIELD_FOR_KEY.get(key, key)
        if name not in names or key in _JSON_ALIASES:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where!r}")
        kwargs[name] = _coerce(value, _FIELD_TYPES[cls][name], f"{path}.{key}" if path else key)
    return cls(**kwargs)


# Resolve field type annotations once (dataclass .type may be a string).
import typing  # noqa: E402

_FIELD_TYPES: dict[type, dict[str, object]] = {}
for _cls in (DeformationConfig, GeneratorConfig, NetworkConfig, TrainingConfig, PipelineConfig):
    _FIELD_TYPES[_cls] = typing.get_type_hints(_cls)


def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: PipelineConfig) -> PipelineConfig:
    g, d = cfg.generator, cfg.generator.deformation
    _check(np.isfinite(cfg.loss_weight) and cfg.loss_weight >= 0,
           f"lambda must be a finite number >= 0, got {cfg.loss_weight}")
    for name, sp in (("t1_spacing", g.t1_spacing), ("t2_spacing", g.t2_spacing)):
        _check(all(np.isfinite(s) and s > 0 for s in sp), f"{name} must be positive, got {sp}")
    _check(0 <= g.noise_sigma_range[0] <= g.noise_sigma_range[1],
           f"noise_sigma_range must be 0 <= lo <= hi, got {g.noise_sigma_range}")
    _check(g.bias_control_points >= 2, "bias_control_points must be >= 2 per axis")
    _check(g.bias_log_std >= 0, "bias_log_std must be >= 0")
    _check(d.rotation_deg >= 0 and d.translation_mm >= 0 and d.warp_std_mm >= 0,
           "deformation magnitudes must be >= 0")
    _check(0 < d.scaling[0] <= d.scaling[1], f"scaling range invalid: {d.scaling}")
    _check(d.warp_control_points >= 2, "warp_control_points must be >= 2 per axis")
    _check(cfg.network.levels >= 1 and cfg.network.base_filters >= 1,
           "network levels and base_filters must be >= 1")
    t = cfg.training
    _check(t.learning_rate >= 0 and np.isfinite(t.learning_rate), "learning_rate must be >= 0")
    _check(t.iterations >= 0, "iterations must be >= 0")
    _check(t.crop_size >= 1, "crop_size must be >= 1")
    _check(t.batch_size >= 1, "batch_size must be >= 1")
    _check(0 <= cfg.seed < MAX_SEED, "seed must be a 64-bit unsigned integer")
    return cfg


def config_from_dict(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    return validate_config(_build(PipelineConfig, obj, ""))


def load_config(path) -> PipelineConfig:
    """Load and validate a JSON config file, filling defaults."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    return config_from_dict(obj)


def _to_jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        out = {}
        for f in dataclasses.fields(value):
            key = _JSON_ALIASES.get(f.name, f.name)
            out[key] = _to_jsonable(getattr(value, f.name))
        return out
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    return value


def config_to_dict(cfg: PipelineConfig) -> dict:
    return _to_jsonable(cfg)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
