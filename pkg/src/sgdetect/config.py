"""Configuration loading: one TOML file plus ``key=value`` overrides."""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_STOPLIST = frozenset({"github", "http", "https", "www"})

DEFAULTS: dict[str, Any] = {
    "analysis": {"max_depth": 10},
    "gae": {
        "hidden": 64,
        "out": 32,
        "mask_p": 0.3,
        "alpha": 1.0,
        "lr": 0.01,
        "epochs": 200,
        "neg_ratio": 1.0,
        "optimizer": "gd",
        "seed": 0,
    },
    "classifier": {"lr": 0.1, "epochs": 500, "l2": 1e-4, "seed": 0},
    "pipeline": {"seed": 0, "features": "scene", "shuffle_labels": False},
    "corpus": {"seed": 0, "per_class": 50, "developer_group_max": 4},
}


def load_toml(path: str | Path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _coerce(text: str) -> Any:
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> dict[str, Any]:
    """Defaults, then the TOML file, then dotted ``section.key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        cfg = merge(cfg, load_toml(path))
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not key=value")
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _coerce(value.strip())
    return cfg


def load_stoplist(path: str | Path | None) -> frozenset[str]:
    """One token per line; ``#`` starts a comment."""
    if path is None:
        return DEFAULT_STOPLIST
    tokens = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        token = line.split("#", 1)[0].strip()
        if token:
            tokens.add(token.lower())
    return frozenset(tokens)
