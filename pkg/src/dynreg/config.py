"""Flat ``key = value`` config files.

Nested configs are addressed with dotted keys (``matching.k = 64``). Values
are Python literals; bare words are strings and ``none``/``true``/``false``
are accepted in lower case. Unknown and repeated keys are errors.
"""

from __future__ import annotations

import ast
import dataclasses
import hashlib
from typing import Any, Dict, List, Tuple

from .errors import ConfigError
from .pipeline import PipelineConfig

_WORDS = {"none": None, "true": True, "false": False}


def config_items(cfg, prefix: str = "") -> List[Tuple[str, Any]]:
    """Every leaf field as (dotted key, value), in declaration order."""
    out = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            out.extend(config_items(value, key + "."))
        else:
            out.append((key, value))
    return out


def format_config(cfg: PipelineConfig) -> str:
    return "".join(f"{key} = {value!r}\n" for key, value in config_items(cfg))


def fingerprint(cfg: PipelineConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()[:16]


def _literal(text: str):
    if text.lower() in _WORDS:
        return _WORDS[text.lower()]
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(key, current, value, line):
    if current is None or value is None:
        return value
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"line {line}: {key} expects true/false, got {value!r}")
        return value
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(current, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(current, list) and isinstance(value, tuple):
        return list(value)
    if isinstance(current, (int, float)) and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigError(f"line {line}: {key} expects a number, got {value!r}")
    if isinstance(current, int) and isinstance(value, float):
        raise ConfigError(f"line {line}: {key} expects an integer, got {value!r}")
    return value


def _rebuild(cfg, overrides: Dict[str, Any]):
    changes, nested = {}, {}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        if rest:
            nested.setdefault(head, {})[rest] = value
        else:
            changes[head] = value
    for head, sub in nested.items():
        changes[head] = _rebuild(getattr(cfg, head), sub)
    return dataclasses.replace(cfg, **changes)


def parse_config(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    known = dict(config_items(base))
    overrides: Dict[str, Any] = {}
    for line, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {line}: expected 'key = value', got {raw.strip()!r}")
        if key not in known:
            raise ConfigError(f"line {line}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"line {line}: {key!r} set twice")
        overrides[key] = _coerce(key, known[key], _literal(value), line)
    try:
        return _rebuild(base, overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)
