"""Experiment configuration: JSON file, schema validation and typed access.

Every key carries its unit in the name (``temperature_uK``, ``c6_GHz_um6``).
Unknown keys are rejected. ``ExperimentConfig.to_dict`` emits the same layout
that ``load_config`` reads, so an effective config written next to a run
reparses to an equal object.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


def _obj(props: dict, required: bool = True) -> dict:
    return {
        "type": "object",
        "properties": props,
        "additionalProperties": False,
        "required": list(props) if required else [],
    }


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_bool = {"type": "boolean"}
_range = {"type": "array", "prefixItems": [_num, _num, {"type": "integer", "minimum": 1}],
          "items": False, "minItems": 3}
_count = {"type": "integer", "minimum": 1}

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "physics": _obj({
        "rabi_raman_MHz": _pos,
        "rabi_rydberg_MHz": _pos,
        "c6_GHz_um6": _num,
        "separation_um": _pos,
        "temperature_uK": _pos,
        "mass_kg": _pos,
        "k_eff_per_m": _nonneg,
        "eta_lightshift": _nonneg,
        "rydberg_lifetime_us": _pos,
    }),
    "noise": _obj({
        "doppler": _bool,
        "lightshift": _bool,
        "rydberg_decay": _bool,
        "prep_error": _bool,
        "ground_t2_prime_s": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "phase_noise": _obj({
            "model": {"enum": ["off", "white_frequency", "servo_bump"]},
            "linewidth_kHz": _nonneg,
            "bump_frequency_MHz": _nonneg,
            "bump_amplitude_rad": _nonneg,
            "drive_scale": _pos,
        }),
    }),
    "detection": _obj({
        "eta_op": _prob,
        "t_recap_us": _nonneg,
        "blowaway_fidelity": _prob,
        "background_loss": _prob,
        "blowaway": _bool,
    }),
    "sequence": _obj({
        "hardware_grid": _bool,
        "collective_pulse": {"enum": ["sqrt2_single", "measured"]},
        "measured_collective_MHz": _pos,
        "max_step_ns": _pos,
    }),
    "scan": _obj({
        "shots_per_point": _count,
        "rabi_ground_us": _range,
        "ramsey_ground_ms": _range,
        "echo_ground_ms": _range,
        "ground_fringe_points": {"type": "integer", "minimum": 3},
        "rabi_rydberg_us": _range,
        "ramsey_rydberg_us": _range,
        "rydberg_fringe_points": {"type": "integer", "minimum": 4},
        "blockade_us": _range,
        "bell_theta_points": {"type": "integer", "minimum": 5},
        "bootstrap": {"type": "integer", "minimum": 0},
    }),
})


@dataclass(frozen=True)
class PhysicsConfig:
    rabi_raman_MHz: float
    rabi_rydberg_MHz: float
    c6_GHz_um6: float
    separation_um: float
    temperature_uK: float
    mass_kg: float
    k_eff_per_m: float
    eta_lightshift: float
    rydberg_lifetime_us: float


@dataclass(frozen=True)
class PhaseNoiseConfig:
    model: str
    linewidth_kHz: float
    bump_frequency_MHz: float
    bump_amplitude_rad: float
    drive_scale: float


@dataclass(frozen=True)
class NoiseConfig:
    doppler: bool
    lightshift: bool
    rydberg_decay: bool
    prep_error: bool
    ground_t2_prime_s: float | None
    phase_noise: PhaseNoiseConfig


@dataclass(frozen=True)
class DetectionConfig:
    eta_op: float
    t_recap_us: float
    blowaway_fidelity: float
    background_loss: float
    blowaway: bool


@dataclass(frozen=True)
class SequenceConfig:
    hardware_grid: bool
    collective_pulse: str
    measured_collective_MHz: float
    max_step_ns: float


@dataclass(frozen=True)
class ScanConfig:
    shots_per_point: int
    rabi_ground_us: tuple
    ramsey_ground_ms: tuple
    echo_ground_ms: tuple
    ground_fringe_points: int
    rabi_rydberg_us: tuple
    ramsey_rydberg_us: tuple
    rydberg_fringe_points: int
    blockade_us: tuple
    bell_theta_points: int
    bootstrap: int


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int
    seed: int
    physics: PhysicsConfig
    noise: NoiseConfig
    detection: DetectionConfig
    sequence: SequenceConfig
    scan: ScanConfig

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d["scan"].items():
            if isinstance(v, tuple):
                d["scan"][k] = list(v)
        return d

    def replace(self, **overrides) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"scan.shots_per_point": 50})``."""
        d = self.to_dict()
        for path, value in overrides.items():
            node = d
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {path!r}")
            node[leaf] = value
        return from_dict(d)


def _build(cls, data: dict):
    kwargs = {}
    for f in fields(cls):
        v = data[f.name]
        sub = {
            "physics": PhysicsConfig, "noise": NoiseConfig, "detection": DetectionConfig,
            "sequence": SequenceConfig, "scan": ScanConfig, "phase_noise": PhaseNoiseConfig,
        }.get(f.name)
        if sub is not None and isinstance(v, dict):
            v = _build(sub, v)
        elif isinstance(v, list):
            v = tuple(v)
        elif isinstance(v, int) and not isinstance(v, bool) and f.type == "float":
            v = float(v)
        kwargs[f.name] = v
    return cls(**kwargs)


def validate(data: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))


def from_dict(data: dict) -> ExperimentConfig:
    validate(data)
    return _build(ExperimentConfig, copy.deepcopy(data))


def default_dict() -> dict:
    text = resources.files("rydbell").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def default_config() -> ExperimentConfig:
    return from_dict(default_dict())


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` gives the shipped defaults."""
    if path is None:
        return default_config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
