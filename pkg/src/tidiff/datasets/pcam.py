"""Histopathology patch upsampling: 96 x 96 -> 512 x 512 bilinear."""
from __future__ import annotations

import numpy as np
from PIL import Image

PATCH_SIZE = 96
OUT_SIZE = 512


def pcam_preprocess(patch: np.ndarray) -> np.ndarray:
    """Bilinear upsample of a 96 x 96 patch (grayscale or RGB) to 512 x 512."""
    arr = np.asarray(patch)
    spatial = arr.shape[:2] if arr.ndim == 3 else arr.shape
    if arr.ndim not in (2, 3) or spatial != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError(
            f"expected a {PATCH_SIZE}x{PATCH_SIZE} patch (H, W[, C]), got shape {arr.shape}"
        )
    if arr.ndim == 2:
        im = Image.fromarray(arr.astype(np.float32), mode="F")
        out = np.asarray(im.resize((OUT_SIZE, OUT_SIZE), Image.Resampling.BILINEAR))
        return _match_dtype(out, arr.dtype)
    channels = [
        np.asarray(
            Image.fromarray(arr[..., c].astype(np.float32), mode="F").resize(
                (OUT_SIZE, OUT_SIZE), Image.Resampling.BILINEAR
            )
        )
        for c in range(arr.shape[2])
    ]
    return _match_dtype(np.stack(channels, axis=-1), arr.dtype)


def _match_dtype(out: np.ndarray, dtype) -> np.ndarray:
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return np.rint(np.clip(out, info.min, info.max)).astype(dtype)
    return out
