"""Flat ``key = value`` configuration files.

Keys are the :class:`~uavcache.model.SystemConfig` field names plus
``epochs`` (the horizon). ``#`` starts a comment. Unknown or repeated keys
are errors; every diagnostic names the line it came from.
"""
from __future__ import annotations

import dataclasses
import hashlib
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .model import ConfigError, ProfileMode, SystemConfig, Trajectory

DEFAULT_EPOCHS = 400

_ENUMS = {"trajectory_policy": Trajectory, "profile_mode": ProfileMode}


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    epochs: int = DEFAULT_EPOCHS

    def echo(self) -> str:
        """Canonical text of every resolved value; stable across runs."""
        lines = [f"{k} = {_render(v)}" for k, v in _items(self.system)]
        lines.append(f"epochs = {self.epochs}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()[:16]


def _items(cfg: SystemConfig):
    for f in fields(cfg):
        yield f.name, getattr(cfg, f.name)


def _render(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, (Trajectory, ProfileMode)):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


_HINTS = typing.get_type_hints(SystemConfig)


def _kind(name: str) -> str:
    if name in _ENUMS:
        return "enum"
    hint = _HINTS[name]
    if hint is int:
        return "int"
    if hint is float:
        return "float"
    if typing.get_origin(hint) is tuple:
        return "tuple"
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        return "optional_float"
    raise TypeError(f"unsupported config field {name}")  # pragma: no cover


def _convert(key: str, text: str, line: int):
    kind = _kind(key)
    try:
        if kind == "int":
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if not parts:
                raise ValueError
            return tuple(float(p) for p in parts)
        if kind == "optional_float":
            return None if text.lower() in ("auto", "none", "") else float(text)
        enum = _ENUMS[key]
        return enum(text)
    except ValueError:
        expected = {
            "int": "an integer",
            "float": "a real number",
            "tuple": "a comma-separated list of reals",
            "optional_float": "a real number or 'auto'",
            "enum": "one of " + ", ".join(e.value for e in _ENUMS.get(key, [])),
        }[kind]
        raise ConfigError(key, f"cannot parse {text!r}, expected {expected}", line) from None


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` (already typed) win over file values."""
    values: dict = {}
    where: dict[str, int] = {}
    known = {f.name for f in fields(SystemConfig)} | {"epochs"}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("<syntax>", f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in known:
            raise ConfigError(key, "unknown key", lineno)
        if key in where:
            raise ConfigError(key, f"duplicate key (first set on line {where[key]})", lineno)
        where[key] = lineno
        if key == "epochs":
            try:
                values[key] = int(val)
            except ValueError:
                raise ConfigError(key, f"cannot parse {val!r}, expected an integer", lineno) from None
            if values[key] < 1:
                raise ConfigError(key, f"{values[key]} outside accepted range (integer >= 1)", lineno)
        else:
            values[key] = _convert(key, val, lineno)
    values.update(overrides or {})
    epochs = values.pop("epochs", DEFAULT_EPOCHS)
    if epochs < 1:
        raise ConfigError("epochs", f"{epochs} outside accepted range (integer >= 1)", where.get("epochs"))
    try:
        system = SystemConfig(**values)
    except ConfigError as err:
        raise ConfigError(err.key, str(err).split(": ", 1)[-1], where.get(err.key)) from None
    return RunConfig(system, epochs)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a config file (``None`` means all defaults)."""
    text = Path(path).read_text() if path is not None else ""
    return parse_config_text(text, overrides)


def validate_config(path: str | Path) -> SystemConfig:
    return load_config(path).system


def with_system(run: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(run, system=run.system.replace(**changes))
