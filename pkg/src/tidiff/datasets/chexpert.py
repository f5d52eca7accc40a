"""Chest radiograph preprocessing: crop, aspect-preserving resize, pad."""
from __future__ import annotations

import numpy as np
from PIL import Image

OUT_SIZE = 512


def chexpert_preprocess(image: np.ndarray, out_size: int = OUT_SIZE) -> np.ndarray:
    """Crop to the non-zero content box, resize the longest edge to
    ``out_size`` keeping aspect ratio, then zero-pad to a square.

    Odd padding remainders put the extra row/column on the high side.
    """
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"expected a single-channel 2-D radiograph, got shape {arr.shape}")
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    if len(rows) == 0:
        raise ValueError("blank radiograph: every pixel is zero")
    cropped = arr[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]

    h, w = cropped.shape
    scale = out_size / max(h, w)
    new_h, new_w = int(round(h * scale)), int(round(w * scale))
    if (new_h, new_w) == (h, w):
        resized = cropped
    else:
        im = Image.fromarray(cropped.astype(np.float32), mode="F")
        resized = np.asarray(im.resize((new_w, new_h), Image.Resampling.BILINEAR))
        if np.issubdtype(arr.dtype, np.integer):
            resized = np.rint(resized).astype(arr.dtype)

    pad_h, pad_w = out_size - new_h, out_size - new_w
    out = np.pad(
        resized,
        ((pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
    )
    return out
