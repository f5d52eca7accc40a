"""Image file I/O and range conventions.

In-memory convention: float32 arrays of shape (C, H, W) with values in
[0, 1].  The diffusion model operates in [-1, 1]; the two helpers at the
bottom convert.  Files are 8-bit lossless PNG; float32 raw dumps (.npy) are
available where bit-exactness matters.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    """PNG -> float32 (C, H, W) in [0, 1]."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (OSError, ValueError) as err:
        raise ValueError(f"unreadable image {path}: {err}") from err
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def save_image(image, path: str | Path) -> Path:
    """float (C, H, W) in [0, 1] -> 8-bit PNG (mode L for 1 channel, RGB for 3)."""
    arr = _to_numpy(image)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W), got shape {arr.shape}")
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if u8.shape[0] == 1:
        im = Image.fromarray(u8[0], mode="L")
    else:
        im = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    im.save(path, format="PNG")
    return path


def save_raw(image, path: str | Path) -> Path:
    """Lossless float32 dump for tests and debugging."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, _to_numpy(image).astype(np.float32))
    return path


def load_raw(path: str | Path) -> np.ndarray:
    return np.load(path)


def to_model_space(image) -> torch.Tensor:
    """[0, 1] image -> [-1, 1] float32 tensor."""
    arr = _to_numpy(image)
    return torch.from_numpy(arr * 2.0 - 1.0).float()


def to_unit_range(latent: torch.Tensor) -> np.ndarray:
    """[-1, 1] model output -> clipped [0, 1] float32 array."""
    arr = latent.detach().cpu().numpy().astype(np.float32)
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0)


def _to_numpy(image) -> np.ndarray:
    if isinstance(image, torch.Tensor):
        return image.detach().cpu().numpy().astype(np.float32)
    return np.asarray(image, dtype=np.float32)
