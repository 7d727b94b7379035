"""Flat key-value experiment configuration with dotted sections.

The on-disk format is one ``key = value`` assignment per line, ``#`` comments,
values parsed as bool/int/float/string or comma-separated lists thereof.
Configurations round-trip exactly through ``dumps``/``parse`` and hash to a
stable digest used by the run manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field

EXPERIMENTS = ("simulate", "decompose", "pullback", "dimension", "squeeze",
               "check-assumptions", "constants", "convergence")


class ConfigError(ValueError):
    """Invalid configuration (unknown names, malformed values, bad CFL)."""


def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_scalar(p) for p in text.split(",") if p.strip() != ""]
    return _parse_scalar(text)


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_format_scalar(x) for x in v)
    return _format_scalar(v)


@dataclass
class ExperimentConfig:
    """Dotted-key configuration mapping; values are scalars or lists."""

    values: dict = dc_field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"line {lineno}: empty key")
            values[key] = _parse_value(val)
        return cls(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def dumps(self) -> str:
        lines = [f"{k} = {_format_value(self.values[k])}"
                 for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    # -- typed access ------------------------------------------------------
    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigError(f"missing required config key {key!r}")
        return self.values[key]

    def get_float(self, key: str, default: float | None = None) -> float:
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing required config key {key!r}")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {v!r}")
        return float(v)

    def get_int(self, key: str, default: int | None = None) -> int:
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing required config key {key!r}")
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {v!r}")
        return int(v)

    def get_str(self, key: str, default: str | None = None) -> str:
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing required config key {key!r}")
        return str(v)

    def get_list(self, key: str, default=None) -> list:
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing required config key {key!r}")
        return list(v) if isinstance(v, (list, tuple)) else [v]

    def override(self, assignment: str) -> None:
        """Apply a ``key=value`` override string (CLI ``--override``)."""
        if "=" not in assignment:
            raise ConfigError(f"override must look like key=value: {assignment!r}")
        key, val = assignment.split("=", 1)
        self.values[key.strip()] = _parse_value(val)

    def section(self, prefix: str) -> dict:
        """All keys under ``prefix.`` with the prefix stripped."""
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.values.items()
                if k.startswith(prefix + ".")}
