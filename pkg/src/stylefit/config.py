"""Configuration loading and merging.

One document (YAML or JSON) configures every component. Values resolve
with the precedence

    explicit overrides (CLI flags)  >  environment  >  config file  >  defaults

Environment variables use the ``STYLEFIT_`` prefix with ``__`` separating
nesting levels, e.g. ``STYLEFIT_BACKEND__STEPS=10`` sets ``backend.steps``.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError

ENV_PREFIX = "STYLEFIT_"

DEFAULTS: dict[str, Any] = {
    "backend": {
        # "mock" or a dotted import path "pkg.module:factory" for an
        # external adapter implementing the Backend protocol.
        "kind": "mock",
        "steps": 50,
        "guidance_scale": 7.5,
        "spatial_factor": 8,
        "latent_channels": 4,
        # Serialize access to the backend across worker threads. The mock
        # is reentrant; real engines usually are not.
        "exclusive": False,
    },
    "cspe": {
        # Blur radius as a fraction of min(H, W).
        "sigma_frac": 0.05,
        # "cielab" (D65 lightness) or "luma" (Rec. 709).
        "lightness_space": "cielab",
    },
    "mask": {
        # Strokes are pixels with luma strictly below this threshold.
        "stroke_threshold": 0.5,
        "close_radius": 3,
        # Optional dilation of the garment mask, in latent cells.
        "person_dilation": 0,
    },
    "removal": {
        "alpha": 1.0,
        # "global" projects over the flattened latent; "per_channel"
        # projects each channel plane independently.
        "mode": "global",
    },
    "injection": {
        "n_blocks": 11,
        "style_blocks": [7],
        "content_blocks": [3, 4, 6],
        "style_scale": 0.5,
        "content_scale": 0.5,
        "sketch_scale": 0.7,
        "text_scale": 0.5,
    },
    "edges": {
        # Percentile of gradient magnitude (within the scored region)
        # above which a pixel counts as an edge.
        "percentile": 90.0,
    },
    "elo": {
        "k_factor": 32.0,
        "initial_rating": 1000.0,
        "n_shuffles": 8,
    },
    "oracle": {
        "endpoint": None,
        "template_path": None,
        "model": None,
        "api_key_env": None,
        "max_concurrency": 4,
        "retries": 3,
        "backoff_seconds": 0.5,
        "timeout_seconds": 60.0,
    },
    "service": {
        "host": "127.0.0.1",
        "port": 8765,
        "workers": 2,
        "data_dir": "stylefit_data",
    },
}


def _deep_merge(base: dict[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _coerce(text: str) -> Any:
    """Interpret an environment value as YAML scalar (int, float, bool,
    null, list) falling back to the raw string."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {name} conflicts with a scalar")
        node[path[-1]] = _coerce(raw)
    return tree


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> dict[str, Any]:
    """Resolve the full configuration tree.

    ``overrides`` is a nested mapping applied last (CLI flags land here).
    Unknown top-level sections are preserved so adapters can carry their
    own settings.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse config {p}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
        cfg = _deep_merge(cfg, loaded)
    env = _env_overrides(os.environ if environ is None else environ)
    if env:
        cfg = _deep_merge(cfg, env)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _validate(cfg: Mapping[str, Any]) -> None:
    backend = cfg["backend"]
    if backend["steps"] < 1:
        raise ConfigError("backend.steps must be >= 1")
    if backend["guidance_scale"] < 0:
        raise ConfigError("backend.guidance_scale must be >= 0")
    if backend["spatial_factor"] < 1:
        raise ConfigError("backend.spatial_factor must be >= 1")
    if not 0 < cfg["cspe"]["sigma_frac"]:
        raise ConfigError("cspe.sigma_frac must be positive")
    if cfg["cspe"]["lightness_space"] not in ("cielab", "luma"):
        raise ConfigError("cspe.lightness_space must be 'cielab' or 'luma'")
    if not 0 < cfg["mask"]["stroke_threshold"] <= 1:
        raise ConfigError("mask.stroke_threshold must be in (0, 1]")
    if cfg["mask"]["close_radius"] < 0:
        raise ConfigError("mask.close_radius must be >= 0")
    if cfg["removal"]["mode"] not in ("global", "per_channel"):
        raise ConfigError("removal.mode must be 'global' or 'per_channel'")
    inj = cfg["injection"]
    n = inj["n_blocks"]
    for field in ("style_blocks", "content_blocks"):
        blocks = inj[field]
        if not all(isinstance(b, int) and 0 <= b < n for b in blocks):
            raise ConfigError(f"injection.{field} must be block indices in [0, {n})")
    if set(inj["style_blocks"]) & set(inj["content_blocks"]):
        raise ConfigError("injection.style_blocks and content_blocks must be disjoint")
    if not 0 <= cfg["edges"]["percentile"] <= 100:
        raise ConfigError("edges.percentile must be in [0, 100]")


def config_to_json(cfg: Mapping[str, Any]) -> str:
    """Stable serialization used by `--print-config` and GET /config."""
    return json.dumps(cfg, indent=2, sort_keys=True)
