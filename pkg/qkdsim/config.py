"""
Session and sweep configuration.

Configs are frozen pydantic models. Values may come from a flat
``key = value`` config file (read with python-dotenv) and from command-line
flags; keys are the long flag names, so a file line ``bell-ratio = 0.5`` and
the flag ``--bell-ratio 0.5`` mean the same thing.
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from .channel import DEFAULT_EVE_ANGLES, EveMode, EveSpec, NoiseSpec
from .errors import ConfigError, UsageError

AXIS_TOLERANCE = 1e-9
DEFAULT_ROUNDS = 20000


class _LenientEnum(str, Enum):
    """String enum that also accepts its values in any letter case."""

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            for member in cls:
                if member.value == value.lower():
                    return member
        return None


class Protocol(_LenientEnum):
    BB84 = "bb84"
    B92 = "b92"
    E91 = "e91"


class AllocationMode(_LenientEnum):
    DESIGNATED = "designated"
    INDEPENDENT = "independent"


class SweepMode(_LenientEnum):
    MONTE_CARLO = "mc"
    ORACLE = "oracle"


E91_DEFAULTS: Dict[str, Any] = {
    "eve_mode": EveMode.BOTH,
    "bell_ratio": 0.25,
    "allocation_mode": AllocationMode.DESIGNATED,
    "eve_angles": DEFAULT_EVE_ANGLES,
}


def _apply_protocol_fields(data: Any) -> Any:
    """Fill E91 defaults, or reject E91-only fields for the other protocols."""
    if not isinstance(data, dict):
        return data
    try:
        protocol = Protocol(data.get("protocol"))
    except ValueError:
        return data
    data = dict(data)
    for name, default in E91_DEFAULTS.items():
        if protocol is Protocol.E91:
            if data.get(name) is None:
                data[name] = default
        elif data.get(name) is not None:
            raise UsageError(name, f"not applicable to protocol {protocol.value}")
    return data


def parse_angles(value: Any) -> Any:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    return value


class _ProtocolFields(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    protocol: Protocol
    eve_mode: Optional[EveMode] = None
    bell_ratio: Optional[float] = Field(None, ge=0.0, le=1.0)
    allocation_mode: Optional[AllocationMode] = None
    eve_angles: Optional[Tuple[float, ...]] = None
    qber_threshold: float = Field(0.11, ge=0.0, le=1.0)
    sample_fraction: float = Field(1.0, gt=0.0, le=1.0)
    chsh_mid: float = Field(2.2, ge=0.0, le=4.0)
    chsh_high: float = Field(2.0, ge=0.0, le=4.0)

    @model_validator(mode="before")
    @classmethod
    def _protocol_fields(cls, data):
        return _apply_protocol_fields(data)

    @field_validator("protocol", "eve_mode", "allocation_mode", mode="before")
    @classmethod
    def _lower_enums(cls, value):
        return value.strip().lower() if isinstance(value, str) else value

    @field_validator("eve_angles", mode="before")
    @classmethod
    def _split_angles(cls, value):
        return parse_angles(value)

    @field_validator("eve_angles")
    @classmethod
    def _check_angles(cls, value):
        if value is not None:
            if not value:
                raise ValueError("must contain at least one angle")
            if not all(math.isfinite(a) for a in value):
                raise ValueError("angles must be finite")
        return value

    @field_validator("eve_mode")
    @classmethod
    def _check_eve_mode(cls, value):
        if value is EveMode.NOT_APPLICABLE:
            raise ValueError("must be one of key, bell, both")
        return value

    @model_validator(mode="after")
    def _check_chsh_thresholds(self):
        if self.chsh_high > self.chsh_mid:
            raise ValueError("chsh_high must not exceed chsh_mid")
        return self

    @property
    def is_e91(self) -> bool:
        return self.protocol is Protocol.E91


class SessionConfig(_ProtocolFields):
    """Full parameterization of one protocol run."""

    rounds: int = Field(DEFAULT_ROUNDS, ge=1)
    noise_p: float = Field(0.0, ge=0.0, le=1.0)
    eve_p: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0, lt=2**64)

    @property
    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.noise_p)

    @property
    def eve_spec(self) -> EveSpec:
        if self.is_e91:
            return EveSpec(self.eve_p, self.eve_mode, self.eve_angles)
        return EveSpec(self.eve_p)


class SweepSpec(_ProtocolFields):
    """A noise x eve lattice of sessions, evaluated by Monte Carlo or by the oracle."""

    noise_axis: Tuple[float, ...]
    eve_axis: Tuple[float, ...]
    rounds_per_cell: int = Field(DEFAULT_ROUNDS, ge=1)
    mode: SweepMode = SweepMode.MONTE_CARLO
    base_seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)

    @field_validator("mode", mode="before")
    @classmethod
    def _lower_mode(cls, value):
        return value.strip().lower() if isinstance(value, str) else value

    @field_validator("noise_axis", "eve_axis", mode="before")
    @classmethod
    def _parse_axis(cls, value, info: ValidationInfo):
        return parse_axis(value, info.field_name) if isinstance(value, str) else value

    @field_validator("noise_axis", "eve_axis")
    @classmethod
    def _check_axis(cls, value):
        if not value:
            raise ValueError("axis must not be empty")
        if any(not (0.0 <= v <= 1.0) for v in value):
            raise ValueError("axis values must lie in [0, 1]")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("axis must be strictly increasing")
        return value

    def cell_config(self, noise_p: float, eve_p: float, seed: int) -> SessionConfig:
        fields = self.model_dump(
            exclude={"noise_axis", "eve_axis", "rounds_per_cell", "mode", "base_seed", "workers"}
        )
        return SessionConfig(
            **fields, rounds=self.rounds_per_cell, noise_p=noise_p, eve_p=eve_p, seed=seed
        )


Model = TypeVar("Model", bound=BaseModel)


def build(model: Type[Model], values: Dict[str, Any]) -> Model:
    """Validate `values` into `model`, reporting the first bad field as a ConfigError."""
    try:
        return model(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or model.__name__
        raise ConfigError(field, first["msg"]) from None


def parse_axis(text: str, field: str = "axis") -> Tuple[float, ...]:
    """
    Parse an axis: ``start:stop:step`` (stop included when it lands within
    1e-9), a comma list ``0,0.5,1`` or a single value.
    """
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0:
                raise ConfigError(field, f"step must be positive in {text!r}")
            count = int(math.floor((stop - start) / step + AXIS_TOLERANCE)) + 1
            if count < 1:
                raise ConfigError(field, f"empty range {text!r}")
            return tuple(round(start + k * step, 12) for k in range(count))
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(field, f"cannot parse {text!r}") from None


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_").lower()


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat ``key = value`` file; keys are normalized to underscore form."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        values = dotenv_values(path, interpolate=False)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError("config", f"{path} is not valid UTF-8") from None
    return {normalize_key(k): v for k, v in values.items() if v is not None}


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


# field name -> config-file / flag key, per config type
SESSION_KEYS = {
    "protocol": "protocol",
    "rounds": "rounds",
    "noise_p": "noise",
    "eve_p": "eve",
    "eve_mode": "eve-mode",
    "bell_ratio": "bell-ratio",
    "allocation_mode": "allocation",
    "eve_angles": "eve-angles",
    "qber_threshold": "threshold",
    "sample_fraction": "sample-fraction",
    "chsh_mid": "chsh-mid",
    "chsh_high": "chsh-high",
    "seed": "seed",
}
SWEEP_KEYS = {
    **{k: v for k, v in SESSION_KEYS.items() if k not in ("rounds", "noise_p", "eve_p", "seed")},
    "rounds_per_cell": "rounds",
    "noise_axis": "noise",
    "eve_axis": "eve",
    "mode": "mode",
    "base_seed": "seed",
    "workers": "workers",
}


def format_config_file(config: Union[SessionConfig, SweepSpec]) -> str:
    """Render a config in the ``key = value`` file format accepted by parse_config."""
    keys = SWEEP_KEYS if isinstance(config, SweepSpec) else SESSION_KEYS
    lines = []
    for field, key in keys.items():
        value = getattr(config, field)
        if value is not None:
            lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"
