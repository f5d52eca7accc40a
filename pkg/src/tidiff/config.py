"""Layered run configuration: defaults < config file < flag overrides.

Config files are either JSON (nested sections) or flat ``key = value``
lines with dotted section paths (``sampler.steps = 100``).  Every command
persists its resolved configuration and sha256 hash next to its outputs.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .utils import stable_hash

DEFAULTS: dict = {
    "schedule": {"sigma_min": 0.02, "sigma_max": 10.0, "rho": 7.0},
    "sampler": {"steps": 100, "cfg_scale": 2.0, "seed": 0},
    "ti": {
        "learning_rate": 0.005,
        "steps": 2_000,
        "batch_size": 1,
        "n_vectors": 64,
        "seed": 0,
    },
    "pretrain": {
        "steps": 4_000,
        "batch_size": 16,
        "learning_rate": 2e-3,
        "seed": 0,
        "hidden": 24,
        "cond_dim": 32,
    },
    "classifier": {
        "learning_rate": 1e-4,
        "total_batches": 600,
        "batch_size": 32,
        "eval_every": 75,
        "seed": 0,
        "backbone": "toy-cnn",
    },
    "fid": {"n_samples": 100, "extractor": "toy"},
}

# The published recipe's counts; restored by --paper-scale.
PAPER_SCALE: dict = {
    "ti": {"steps": 50_000},
    "classifier": {"total_batches": 6_250, "eval_every": 250},
    "sampler": {"steps": 100},
    "fid": {"n_samples": 100},
}


def _deep_update(base: dict, overlay: dict) -> dict:
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config_file(path: str | Path) -> dict:
    """JSON or flat key=value (dots select sections)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_scalar(value)
    return out


def resolve_config(
    config_file: str | Path | None = None,
    overrides: dict | None = None,
    paper_scale: bool = False,
) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if paper_scale:
        _deep_update(cfg, copy.deepcopy(PAPER_SCALE))
    if config_file is not None:
        _deep_update(cfg, load_config_file(config_file))
    if overrides:
        _deep_update(cfg, overrides)
    return cfg


def config_hash(cfg: dict) -> str:
    return stable_hash(cfg)


def write_run_config(out_dir: str | Path, cfg: dict) -> str:
    """Persist the resolved config and its hash beside the run outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    (out_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
    (out_dir / "config.hash").write_text(digest + "\n")
    return digest
