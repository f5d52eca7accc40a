"""Hashing, seeding and fingerprint helpers used throughout the toolkit."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

import torch


def canonical_json(obj) -> str:
    """Serialize to JSON with sorted keys and no whitespace jitter."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonify)


def _jsonify(obj):
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def stable_hash(obj) -> str:
    """sha256 hex digest of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def derive_seed(base: int, *tags) -> int:
    """Deterministically derive an independent 63-bit seed from a base seed.

    Used to give auxiliary random streams (e.g. the inpainting blend noise)
    their own generator without disturbing the documented draw order of the
    main stream.
    """
    h = hashlib.sha256(repr((int(base),) + tags).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little") & (2**63 - 1)


def torch_generator(seed: int) -> torch.Generator:
    """Seeded CPU generator; seeds are folded into the int64 range."""
    g = torch.Generator()
    g.manual_seed(int(seed) % 2**63)
    return g


def parameter_fingerprint(*modules: torch.nn.Module) -> str:
    """sha256 over every parameter and buffer of the given modules.

    Entries are visited in sorted name order so the digest is stable; any
    change to any value changes the digest.
    """
    h = hashlib.sha256()
    for k, module in enumerate(modules):
        state = module.state_dict()
        for name in sorted(state):
            t = state[name]
            h.update(f"{k}:{name}:{tuple(t.shape)}:{t.dtype}".encode())
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def intersect_ids(a: Iterable[str], b: Iterable[str]) -> set[str]:
    return set(a) & set(b)


def format_mapping(m: Mapping) -> str:
    return ", ".join(f"{k}={v}" for k, v in sorted(m.items()))
