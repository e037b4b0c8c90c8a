"""Strict JSON configuration: platform, optimizer, controller and scenario."""

from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field

from .control import ControllerConfig, PidGains
from .platform import PlatformParams
from .sim import TRAJECTORY_KINDS, DisturbanceZone
from .tiltopt import OptimConfig, PsoConfig


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = path or "<root>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Scenario:
    trajectory: str = "sweep"
    duration: float = 40.0
    distance: float = 5.0
    amplitude: float = 1.0
    zone: DisturbanceZone | None = field(default_factory=DisturbanceZone)
    dt: float = 1e-3

    def __post_init__(self):
        if self.trajectory not in TRAJECTORY_KINDS:
            raise ValueError(f"trajectory must be one of {TRAJECTORY_KINDS}")
        if not self.duration > 0 or not self.dt > 0:
            raise ValueError("duration and dt must be positive")


@dataclass(frozen=True)
class Config:
    platform: PlatformParams = field(default_factory=PlatformParams)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scenario: Scenario = field(default_factory=Scenario)

    def __post_init__(self):
        if not math.isclose(self.controller.dt, self.scenario.dt):
            raise ValueError("controller.dt and scenario.dt must agree")


def _key_lines(text: str) -> dict[tuple, int]:
    """Line number of every object key, addressed by its path."""
    lines: dict[tuple, int] = {}
    stack: list[list] = []  # [kind, path, next array index]
    i, n, line = 0, len(text), 1
    pending_key = None
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == '"':
            s, end = json.decoder.scanstring(text, i + 1)
            line += text.count("\n", i, end)
            j = end
            while j < n and text[j] in " \t\r\n":
                j += 1
            if stack and stack[-1][0] == "obj" and j < n and text[j] == ":":
                pending_key = s
                lines[stack[-1][1] + (s,)] = line
            i = end
            continue
        elif ch in "{[":
            if stack and stack[-1][0] == "obj":
                path = stack[-1][1] + (pending_key,)
            elif stack:
                path = stack[-1][1] + (stack[-1][2],)
            else:
                path = ()
            stack.append(["obj" if ch == "{" else "arr", path, 0])
        elif ch in "}]":
            stack.pop()
        elif ch == "," and stack and stack[-1][0] == "arr":
            stack[-1][2] += 1
        i += 1
    return lines


def _fmt_path(path: tuple) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Loader:
    def __init__(self, text: str):
        self.lines = _key_lines(text)

    def error(self, message: str, path: tuple) -> ConfigError:
        line = None
        for k in range(len(path), 0, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        return ConfigError(message, _fmt_path(path), line)

    def build(self, cls, data, path: tuple):
        if not isinstance(data, dict):
            raise self.error(f"expected an object, got {type(data).__name__}", path)
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls) if f.init}
        for key in data:
            if key not in names:
                raise self.error(f"unknown key {key!r} (allowed: {', '.join(sorted(names))})", path + (key,))
        kwargs = {k: self.coerce(hints[k], v, path + (k,)) for k, v in data.items()}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            # Point at the offending field when the message names it.
            msg = str(exc)
            named = [k for k in data if msg.startswith(k)]
            raise self.error(msg, path + (max(named, key=len),) if named else path) from None

    def coerce(self, tp, value, path: tuple):
        origin = typing.get_origin(tp)
        if origin in (typing.Union, types.UnionType):
            args = typing.get_args(tp)
            if value is None and type(None) in args:
                return None
            (inner,) = [a for a in args if a is not type(None)]
            return self.coerce(inner, value, path)
        if dataclasses.is_dataclass(tp):
            return self.build(tp, value, path)
        if origin is tuple:
            if not isinstance(value, list):
                raise self.error("expected a list", path)
            args = typing.get_args(tp)
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(self.coerce(args[0], v, path + (k,)) for k, v in enumerate(value))
            if len(value) != len(args):
                raise self.error(f"expected {len(args)} entries, got {len(value)}", path)
            return tuple(self.coerce(a, v, path + (k,)) for k, (a, v) in enumerate(zip(args, value)))
        if tp is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise self.error(f"expected a number, got {json.dumps(value)}", path)
            return float(value)
        if tp is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise self.error(f"expected an integer, got {json.dumps(value)}", path)
            return value
        if tp is str:
            if not isinstance(value, str):
                raise self.error(f"expected a string, got {json.dumps(value)}", path)
            return value
        raise self.error(f"unsupported field type {tp}", path)


def parse_config(text: str) -> Config:
    """Parse and validate a config document. Missing sections take defaults."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, "", exc.lineno) from None
    return _Loader(text).build(Config, data, ())


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def config_to_dict(cfg: Config) -> dict:
    """Plain JSON-ready form that :func:`parse_config` reads back."""

    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v) if f.init}
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v

    return plain(cfg)


__all__ = [
    "Config",
    "ConfigError",
    "PidGains",
    "PsoConfig",
    "Scenario",
    "config_to_dict",
    "load_config",
    "parse_config",
]
