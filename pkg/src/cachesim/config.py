"""Flat ``key = value`` configuration files.

Example::

    version = 1
    seed = 7
    cache.num_bins = 10
    agent.gamma = 0.97
    features.window = 100
    sweep.capacities = 4MB, 16MB, 64MB

Lists are comma separated. Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .agent import AgentConfig
from .features import FeatureConfig
from .trace import DEFAULT_BLOCK_SIZE

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    version: int = CONFIG_VERSION
    seed: int = 0
    block_size: int = DEFAULT_BLOCK_SIZE
    out_dir: str = ""
    limit: int | None = None
    warmup: int = 0
    num_bins: int = 10
    agent: AgentConfig = field(default_factory=AgentConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    traces: list[str] = field(default_factory=list)
    policies: list[str] = field(default_factory=lambda: ["lru", "lfu", "lecar", "opt", "phoebe"])
    capacities: list[str] = field(default_factory=list)
    gammas: list[float] = field(default_factory=lambda: [0.95])
    seeds: list[int] = field(default_factory=lambda: [0])
    workers: int = 1

    def as_lines(self) -> list[str]:
        """The effective configuration in file syntax."""
        out = []
        for key, (obj, attr) in _KEYS.items():
            target = self if obj is None else getattr(self, obj)
            v = getattr(target, attr)
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            elif v is None:
                v = ""
            out.append(f"{key} = {v}")
        return out


def _scalar(text: str, typ: Any):
    text = text.strip()
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    if typ in (bool, "bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return text


# key -> (sub-object attribute or None, field name)
_KEYS: dict[str, tuple[str | None, str]] = {}
_TYPES: dict[str, Any] = {}

for _f in fields(Settings):
    if _f.name in ("agent", "features"):
        continue
    sect = "sweep." if _f.name in ("traces", "policies", "capacities", "gammas", "seeds", "workers") else ""
    sect = "cache." if _f.name == "num_bins" else sect
    _KEYS[sect + _f.name] = (None, _f.name)
    _TYPES[sect + _f.name] = _f.type
for _sub, _cls in (("agent", AgentConfig), ("features", FeatureConfig)):
    for _f in fields(_cls):
        _KEYS[f"{_sub}.{_f.name}"] = (_sub, _f.name)
        _TYPES[f"{_sub}.{_f.name}"] = _f.type


def _convert(key: str, raw: str):
    typ = str(_TYPES[key])
    if typ.startswith("list["):
        inner = typ[5:-1]
        return [_scalar(x, inner) for x in raw.split(",") if x.strip()]
    if raw.strip() == "" and "None" in typ:
        return None
    base = typ.split("|")[0].strip()
    return _scalar(raw, base)


def apply(settings: Settings, values: dict[str, str]) -> Settings:
    """Return a copy of ``settings`` with string ``values`` applied."""
    top: dict[str, Any] = {}
    subs: dict[str, dict[str, Any]] = {"agent": {}, "features": {}}
    for key, raw in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            val = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        obj, attr = _KEYS[key]
        (top if obj is None else subs[obj])[attr] = val
    if top.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {top['version']}")
    try:
        new = replace(settings, **top)
        new.agent = replace(new.agent, **subs["agent"])
        new.features = replace(new.features, **subs["features"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return new


def parse(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def load(path: str | Path | None, base: Settings | None = None) -> Settings:
    base = base or Settings()
    if path is None:
        return dataclasses.replace(base)
    return apply(base, parse(Path(path).read_text(encoding="utf-8")))
