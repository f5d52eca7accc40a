"""Multi-modal prostate MRI slice extraction.

Pipeline per case: resample all modalities to 3 x 0.5 x 0.5 mm, center-crop
to a 90 x 150 x 150 mm region (30 x 300 x 300 voxels), pick one axial slice
(median prostate slice for negatives, maximum tumor area for positives),
upsample it to 512 x 512 and pack the modalities as RGB channels with
per-channel percentile normalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import zoom

MODALITIES = ("t2w", "adc", "dwi")  # packed as R, G, B in this order
TARGET_SPACING = (3.0, 0.5, 0.5)  # mm, (z, y, x)
CROP_MM = (90.0, 150.0, 150.0)
OUT_SIZE = 512
CLIP_PERCENTILES = (0.5, 99.5)


@dataclass
class VolumeCase:
    """One multi-modal 3-D case: (depth, height, width) arrays per modality."""

    modalities: dict
    spacing: tuple  # (z, y, x) in mm
    label: str  # "negative" or "positive"
    prostate_seg: np.ndarray | None = None
    tumor_seg: np.ndarray | None = None
    case_id: str = ""

    def __post_init__(self):
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"voxel spacing must be positive, got {self.spacing}")
        shapes = {m: v.shape for m, v in self.modalities.items()}
        if len(set(shapes.values())) > 1:
            raise ValueError(f"modalities must be co-registered to equal shape, got {shapes}")
        if self.label not in ("negative", "positive"):
            raise ValueError(f"label must be 'negative' or 'positive', got {self.label!r}")


def resampled_shape(shape, spacing, target) -> tuple[int, ...]:
    """Voxel counts after resampling: round(extent_mm / target_spacing)."""
    return tuple(
        int(np.rint(n * s / t)) for n, s, t in zip(shape, spacing, target)
    )


def resample_volume(volume: np.ndarray, spacing, target, order: int) -> np.ndarray:
    new_shape = resampled_shape(volume.shape, spacing, target)
    factors = [n / o for n, o in zip(new_shape, volume.shape)]
    out = zoom(volume.astype(np.float32), factors, order=order, mode="nearest")
    if out.shape != new_shape:  # zoom rounds the same way, but guard anyway
        raise RuntimeError(f"resample produced {out.shape}, expected {new_shape}")
    return out


def center_crop(volume: np.ndarray, crop_shape) -> np.ndarray:
    """Center crop (zero-padding where the volume is smaller).

    Odd remainders put the extra voxel on the high side.
    """
    out = volume
    for axis, target in enumerate(crop_shape):
        n = out.shape[axis]
        if n > target:
            low = (n - target) // 2
            out = np.take(out, range(low, low + target), axis=axis)
        elif n < target:
            deficit = target - n
            before = deficit // 2
            pads = [(0, 0)] * out.ndim
            pads[axis] = (before, deficit - before)
            out = np.pad(out, pads)
    return out


def select_slice(case_label: str, prostate_seg: np.ndarray | None, tumor_seg: np.ndarray | None) -> int:
    """Negatives: median prostate-containing slice (lower median on ties).
    Positives: slice with maximum tumor area (first on ties)."""
    if case_label == "negative":
        present = np.flatnonzero(prostate_seg.reshape(prostate_seg.shape[0], -1).any(axis=1))
        if len(present) == 0:
            raise ValueError("empty prostate segmentation: no slice contains the prostate")
        return int(present[(len(present) - 1) // 2])
    areas = tumor_seg.reshape(tumor_seg.shape[0], -1).sum(axis=1)
    if areas.sum() == 0:
        raise ValueError("empty tumor segmentation: positive case has no tumor voxels")
    return int(np.argmax(areas))


def normalize_channel(channel: np.ndarray) -> np.ndarray:
    """Percentile-clipped min-max normalization to [0, 255] uint8."""
    lo, hi = np.percentile(channel, CLIP_PERCENTILES)
    clipped = np.clip(channel, lo, hi)
    if hi <= lo:
        return np.zeros(channel.shape, dtype=np.uint8)
    scaled = (clipped - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def picai_extract(case: VolumeCase) -> np.ndarray:
    """Produce the packed (3, 512, 512) uint8 image for one case."""
    missing = [m for m in MODALITIES if m not in case.modalities]
    if missing:
        raise ValueError(f"case {case.case_id!r} is missing modalities: {missing}")
    if case.label == "negative" and case.prostate_seg is None:
        raise ValueError("negative cases need a prostate segmentation")
    if case.label == "positive" and case.tumor_seg is None:
        raise ValueError("positive cases need a tumor segmentation")

    crop_vox = tuple(int(np.rint(c / t)) for c, t in zip(CROP_MM, TARGET_SPACING))

    volumes = {}
    for m in MODALITIES:
        v = resample_volume(case.modalities[m], case.spacing, TARGET_SPACING, order=1)
        volumes[m] = center_crop(v, crop_vox)

    seg = case.prostate_seg if case.label == "negative" else case.tumor_seg
    seg = resample_volume(seg.astype(np.float32), case.spacing, TARGET_SPACING, order=0)
    seg = center_crop(seg, crop_vox) > 0.5

    k = select_slice(case.label, seg if case.label == "negative" else None,
                     seg if case.label == "positive" else None)

    channels = []
    for m in MODALITIES:
        sl = volumes[m][k]
        factor = OUT_SIZE / sl.shape[0]
        up = zoom(sl, (factor, OUT_SIZE / sl.shape[1]), order=1, mode="nearest")
        channels.append(normalize_channel(up))
    return np.stack(channels)
