"""Layered tool configuration: defaults < TOML file < environment < flags.

Example ``tracer.toml``::

    registry_path = "parser_registry.json"
    output_root = "traces"

    [model]
    url = "http://localhost:8000/v1/diagnose"
    key_env = "TRACER_MODEL_KEY"

    [budget]
    max_turns = 50
    max_tokens = 200000

    [weights]
    regression = 4.0
    diff = 1.0
    backtrack = 2.0
    ratio = 0.5
    diff_scale = 20.0

    [evaluation]
    pred_cap = 10
    gold_mode = "union"

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from runtrace.diagnosis.clients import KEY_ENV, URL_ENV
from runtrace.diagnosis.heuristic import HeuristicWeights
from runtrace.evaluation import GoldMode

CONFIG_ENV = "TRACER_CONFIG"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ToolConfig:
    registry_path: Path | None = None
    output_root: Path | None = None
    model_url: str | None = None
    key_env: str = KEY_ENV
    max_turns: int = 50
    max_tokens: int = 200_000
    weights: HeuristicWeights = field(default_factory=HeuristicWeights)
    pred_cap: int | None = None
    gold_mode: GoldMode = GoldMode.UNION
    source: str | None = None  # config file the values came from, if any

    @property
    def model_key(self) -> str | None:
        return os.environ.get(self.key_env)

    def to_dict(self) -> dict[str, Any]:
        """Resolved values for reports. The key itself is never included."""
        return {
            "registry_path": str(self.registry_path) if self.registry_path else None,
            "output_root": str(self.output_root) if self.output_root else None,
            "model": {"url": self.model_url, "key_env": self.key_env, "key_set": self.model_key is not None},
            "budget": {"max_turns": self.max_turns, "max_tokens": self.max_tokens},
            "weights": self.weights.to_dict(),
            "evaluation": {"pred_cap": self.pred_cap, "gold_mode": self.gold_mode.value},
            "source": self.source,
        }


_SECTIONS: dict[str, set[str]] = {
    "model": {"url", "key_env"},
    "budget": {"max_turns", "max_tokens"},
    "weights": {f.name for f in fields(HeuristicWeights)},
    "evaluation": {"pred_cap", "gold_mode"},
}
_TOP = {"registry_path", "output_root"}


def _positive_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigError(key, f"expected a positive integer, got {value!r}")
    return value


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return float(value)


def _text(key: str, value: Any) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(key, f"expected a non-empty string, got {value!r}")
    return value


def _syntax_key(text: str, exc: Exception) -> str:
    m = re.search(r"line (\d+)", str(exc))
    if m:
        lines = text.splitlines()
        line_no = int(m.group(1))
        if 1 <= line_no <= len(lines):
            km = re.match(r"\s*\[?\s*([A-Za-z0-9_.\-]+)", lines[line_no - 1])
            if km:
                return km.group(1)
        return f"line {line_no}"
    return "<config>"


def _apply_file(cfg: ToolConfig, path: Path) -> ToolConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config file: {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(_syntax_key(text, exc), f"malformed config file {path}: {exc}") from exc
    base = path.parent
    changes: dict[str, Any] = {"source": str(path)}
    weights = cfg.weights.to_dict()
    for key, value in data.items():
        if key in _TOP:
            resolved = Path(_text(key, value))
            changes[key] = resolved if resolved.is_absolute() else (base / resolved)
            continue
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown setting")
        if not isinstance(value, Mapping):
            raise ConfigError(key, "expected a table")
        for sub, subvalue in value.items():
            dotted = f"{key}.{sub}"
            if sub not in _SECTIONS[key]:
                raise ConfigError(dotted, "unknown setting")
            if key == "model":
                changes["model_url" if sub == "url" else "key_env"] = _text(dotted, subvalue)
            elif key == "budget":
                changes[sub] = _positive_int(dotted, subvalue)
            elif key == "weights":
                weights[sub] = _number(dotted, subvalue)
            elif sub == "pred_cap":
                changes["pred_cap"] = _positive_int(dotted, subvalue)
            else:
                try:
                    changes["gold_mode"] = GoldMode(subvalue)
                except ValueError as exc:
                    raise ConfigError(dotted, f"expected one of {[m.value for m in GoldMode]}") from exc
    if weights["diff_scale"] <= 0:
        raise ConfigError("weights.diff_scale", "must be positive")
    changes["weights"] = HeuristicWeights(**weights)
    return replace(cfg, **changes)


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ToolConfig:
    """Resolve the configuration; ``overrides`` holds flag values (``None`` means unset)."""
    env = os.environ if env is None else env
    cfg = ToolConfig()
    file_path = path or env.get(CONFIG_ENV)
    if file_path:
        cfg = _apply_file(cfg, Path(file_path))
    if env.get(URL_ENV):
        cfg = replace(cfg, model_url=env[URL_ENV])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in {f.name for f in fields(ToolConfig)}:
            raise ConfigError(key, "unknown setting")
        if key in ("max_turns", "max_tokens", "pred_cap"):
            value = _positive_int(key, value)
        elif key == "gold_mode":
            value = GoldMode(value)
        elif key in ("registry_path", "output_root"):
            value = Path(value)
        cfg = replace(cfg, **{key: value})
    return cfg
