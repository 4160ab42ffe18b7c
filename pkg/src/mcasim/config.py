"""Strict JSON configuration: typed dataclass blocks, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
import math
import typing
from typing import Any


class ConfigError(ValueError):
    """Validation failure; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {message}" if field else f"{where}{message}")


def check(cond: bool, field: str, message: str):
    if not cond:
        raise ConfigError(field, message)


def check_prob(value: float, field: str):
    check(0.0 <= value <= 1.0, field, f"must lie in [0, 1], got {value}")


def check_positive(value: float, field: str):
    check(value > 0 and math.isfinite(value), field, f"must be positive, got {value}")


def _coerce(value: Any, tp: Any, path: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, "expected an object")
        return from_dict(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        args = typing.get_args(tp)
        inner = args[0] if args else Any
        return tuple(_coerce(v, inner, f"{path}[{i}]") for i, v in enumerate(value))
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        value = float(value)
        if math.isnan(value):
            raise ConfigError(path, "NaN is not allowed")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


def from_dict(cls, data: dict, path: str = ""):
    """Build dataclass ``cls`` from ``data``; missing keys take defaults, unknown keys fail."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    obj = cls(**kwargs)
    validate = getattr(obj, "validate", None)
    if validate is not None:
        try:
            validate()
        except ConfigError as err:
            if path and not err.field.startswith(path):
                raise ConfigError(f"{path}.{err.field}", str(err).split(": ", 1)[-1]) from None
            raise
    return obj


def to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = [to_dict(x) if dataclasses.is_dataclass(x) else x for x in v]
        out[f.name] = v
    return out


def defaulted_fields(cls, data: dict, path: str = "") -> list[str]:
    """Dotted names of every field that took its default value."""
    hints = typing.get_type_hints(cls)
    out = []
    for f in dataclasses.fields(cls):
        key = f"{path}.{f.name}" if path else f.name
        if f.name not in data:
            out.append(key)
        elif dataclasses.is_dataclass(hints[f.name]) and isinstance(data[f.name], dict):
            out.extend(defaulted_fields(hints[f.name], data[f.name], key))
    return out


MECHANISMS = ("dupstat", "ccselect", "mecassoc", "compcoord")


def mechanism_config_class(name: str):
    if name == "dupstat":
        from .dupstat import DupstatConfig
        return DupstatConfig
    if name == "ccselect":
        from .ccselect import CarrierConfig
        return CarrierConfig
    if name == "mecassoc":
        from .mecassoc import OffloadConfig
        return OffloadConfig
    if name == "compcoord":
        from .compcoord import CompConfig
        return CompConfig
    raise ConfigError("mechanism", f"unknown mechanism {name!r}")


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    mechanism: str
    params: Any
    master_seed: int = 1
    run_count: int = 1
    samples: int | None = None
    slot_duration_ms: float = 1.0
    defaulted: tuple = ()

    def echo(self) -> dict:
        return {
            "seed": self.master_seed,
            "runs": self.run_count,
            "slot_duration_ms": self.slot_duration_ms,
            self.mechanism: to_dict(self.params),
        }


_TOP_KEYS = {"seed", "runs", "slot_duration_ms"}


def parse_config(raw: str | dict, mechanism: str | None = None) -> ScenarioConfig:
    """Validate a JSON document (text or already-parsed dict)."""
    if isinstance(raw, str):
        try:
            doc = json.loads(raw) if raw.strip() else {}
        except json.JSONDecodeError as err:
            raise ConfigError("", f"invalid JSON: {err.msg} (column {err.colno})", line=err.lineno) from None
    else:
        doc = raw
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be a JSON object")
    blocks = [k for k in doc if k in MECHANISMS]
    unknown = sorted(set(doc) - _TOP_KEYS - set(MECHANISMS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if len(blocks) > 1:
        raise ConfigError(blocks[1], "exactly one mechanism block is allowed")
    if mechanism is None:
        if not blocks:
            raise ConfigError("", "no mechanism block present")
        mechanism = blocks[0]
    elif mechanism not in MECHANISMS:
        raise ConfigError("mechanism", f"unknown mechanism {mechanism!r}")
    elif blocks and blocks[0] != mechanism:
        raise ConfigError(blocks[0], f"block does not match subcommand {mechanism!r}")
    block = doc.get(mechanism, {})
    if not isinstance(block, dict):
        raise ConfigError(mechanism, "expected an object")
    cls = mechanism_config_class(mechanism)
    params = from_dict(cls, block, mechanism)
    seed = _coerce(doc.get("seed", 1), int, "seed")
    check(0 <= seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    runs = _coerce(doc.get("runs", 1), int, "runs")
    check(runs >= 1, "runs", "must be >= 1")
    slot_ms = _coerce(doc.get("slot_duration_ms", 1.0), float, "slot_duration_ms")
    check_positive(slot_ms, "slot_duration_ms")
    return ScenarioConfig(
        mechanism=mechanism,
        params=params,
        master_seed=seed,
        run_count=runs,
        slot_duration_ms=slot_ms,
        defaulted=tuple(defaulted_fields(cls, block, mechanism)),
    )


validate_config = parse_config
