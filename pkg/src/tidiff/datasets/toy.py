"""Synthetic toy modality: soft-edged organ ellipses with optional lesions.

"healthy" images are a smooth textured ellipse on a dark background, with
occasional faint distractor bumps.  "diseased" images add 1-3 bright
elliptical lesions whose centers, sizes and contrasts are recorded as
ground truth.  Everything is deterministic per seed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..images import save_image
from ..utils import stable_hash
from .manifest import DatasetManifest, SliceRecord

LABELS = ("healthy", "diseased")


@dataclass(frozen=True)
class ToyDataConfig:
    size: int = 64
    background: float = 0.07
    background_texture: float = 0.03
    organ_intensity: tuple = (0.42, 0.58)
    organ_radius: tuple = (14.0, 22.0)
    organ_center_jitter: float = 6.0
    organ_texture: float = 0.05
    edge_softness: float = 1.5
    lesion_count: tuple = (1, 3)
    lesion_radius: tuple = (2.5, 6.0)
    lesion_contrast: tuple = (0.18, 0.50)
    bump_prob: float = 0.6
    bump_count: tuple = (1, 2)
    bump_contrast: tuple = (0.03, 0.09)
    pixel_noise: float = 0.01
    salience_ref: float = 40.0

    def config_hash(self) -> str:
        return stable_hash({"toy": asdict(self)})


def _coordinate_grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return ys, xs


def _soft_ellipse(ys, xs, cy, cx, ry, rx, angle, softness):
    """Smooth [0, 1] membership field of a rotated ellipse."""
    dy, dx = ys - cy, xs - cx
    ca, sa = np.cos(angle), np.sin(angle)
    u = (ca * dx + sa * dy) / rx
    v = (-sa * dx + ca * dy) / ry
    q = np.sqrt(u**2 + v**2)
    # ~1 inside, 0 outside, linear ramp of width `softness` pixels at the rim
    ramp = (1.0 - q) * (min(rx, ry) / max(softness, 1e-6))
    return np.clip(ramp, 0.0, 1.0)


def _draw_blob(rng, organ, radius_range, contrast_range):
    """Random bright blob placed inside the organ ellipse."""
    cy, cx, ry_o, rx_o, angle_o = organ
    # place the center within 70% of the organ radius so blobs stay inside
    t = rng.uniform(0.0, 2.0 * np.pi)
    r_frac = np.sqrt(rng.uniform(0.0, 1.0)) * 0.7
    ca, sa = np.cos(angle_o), np.sin(angle_o)
    ex, ey = r_frac * np.cos(t) * rx_o, r_frac * np.sin(t) * ry_o
    by = cy + sa * ex + ca * ey
    bx = cx + ca * ex - sa * ey
    ry = rng.uniform(*radius_range)
    rx = rng.uniform(*radius_range)
    angle = rng.uniform(0.0, np.pi)
    contrast = rng.uniform(*contrast_range)
    return {
        "cy": float(by),
        "cx": float(bx),
        "ry": float(ry),
        "rx": float(rx),
        "angle": float(angle),
        "contrast": float(contrast),
    }


def render_case(rng: np.random.Generator, cfg: ToyDataConfig, diseased: bool):
    """Render one image; returns (float image (H, W) in [0, 1], lesion list)."""
    size = cfg.size
    ys, xs = _coordinate_grid(size)

    center = size / 2.0
    cy = center + rng.uniform(-cfg.organ_center_jitter, cfg.organ_center_jitter)
    cx = center + rng.uniform(-cfg.organ_center_jitter, cfg.organ_center_jitter)
    ry = rng.uniform(*cfg.organ_radius)
    rx = rng.uniform(*cfg.organ_radius)
    angle = rng.uniform(0.0, np.pi)
    intensity = rng.uniform(*cfg.organ_intensity)
    organ = (cy, cx, ry, rx, angle)

    img = cfg.background + cfg.background_texture * gaussian_filter(
        rng.standard_normal((size, size)), 8.0
    )
    organ_field = _soft_ellipse(ys, xs, cy, cx, ry, rx, angle, cfg.edge_softness)
    img = img + intensity * organ_field
    texture = gaussian_filter(rng.standard_normal((size, size)), 2.5)
    img = img + cfg.organ_texture * texture * organ_field

    # faint distractor bumps on some healthy-looking anatomy
    if rng.uniform() < cfg.bump_prob:
        n_bumps = rng.integers(cfg.bump_count[0], cfg.bump_count[1] + 1)
        for _ in range(n_bumps):
            b = _draw_blob(rng, organ, cfg.lesion_radius, cfg.bump_contrast)
            field = _soft_ellipse(ys, xs, b["cy"], b["cx"], b["ry"], b["rx"], b["angle"], 1.0)
            img = img + b["contrast"] * field * organ_field

    lesions = []
    if diseased:
        n = rng.integers(cfg.lesion_count[0], cfg.lesion_count[1] + 1)
        for _ in range(n):
            lesion = _draw_blob(rng, organ, cfg.lesion_radius, cfg.lesion_contrast)
            field = _soft_ellipse(
                ys, xs, lesion["cy"], lesion["cx"], lesion["ry"], lesion["rx"], lesion["angle"], 1.0
            )
            img = img + lesion["contrast"] * field * organ_field
            lesions.append(lesion)

    img = img + cfg.pixel_noise * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0).astype(np.float32), lesions


def lesion_salience(lesions, cfg: ToyDataConfig) -> float:
    """Total lesion load in [0, 1]: sum of contrast * area over the reference."""
    total = sum(l["contrast"] * np.pi * l["ry"] * l["rx"] for l in lesions)
    return float(min(1.0, total / cfg.salience_ref))


def toy_generate(
    n_per_class: int,
    seed: int,
    out_dir: str | Path,
    config: ToyDataConfig = ToyDataConfig(),
) -> DatasetManifest:
    """Render a balanced toy dataset and write images + manifest.

    Layout: ``out_dir/images/<label>_<idx>.png`` and ``out_dir/manifest.jsonl``.
    The manifest records lesion ground truth and the per-case lesion
    salience used by conditioning-aware consumers.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    cfg_hash = config.config_hash()

    records = []
    for label in LABELS:
        diseased = label == "diseased"
        for i in range(n_per_class):
            img, lesions = render_case(rng, config, diseased)
            rel = f"images/{label}_{i:04d}.png"
            save_image(img[None], out_dir / rel)
            records.append(
                SliceRecord(
                    id=f"toy-{seed}-{label}-{i:04d}",
                    path=rel,
                    label=label,
                    dataset="toy",
                    config_hash=cfg_hash,
                    extra={
                        "lesions": lesions,
                        "salience": lesion_salience(lesions, config),
                    },
                )
            )

    manifest = DatasetManifest(records=records, dataset="toy", config_hash=cfg_hash, root=out_dir)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest
