"""Mask-blended inpainting on top of the ancestral sampling loop.

After every ancestral step the preserved region (mask == 0) is reset to the
reference image re-noised to the step's sigma level, using a replacement
noise stream that is independent of the sampler's own stream.  At the final
sigma of zero the preserved region therefore equals the reference exactly,
and an all-ones mask reproduces plain sampling bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .backbones import DenoiserBackbone
from .errors import NumericError, SamplingError, ShapeMismatchError
from .guidance import GuidanceSpec, guided_noise_prediction
from .sampler import euler_ancestral_step
from .schedule import NoiseSchedule
from .utils import derive_seed, torch_generator

MASK_THRESHOLD = 128  # 8-bit masks: >= 128 means regenerate


@dataclass
class InpaintMask:
    """Binary field over the reference image: 1 = regenerate, 0 = preserve."""

    mask: torch.Tensor
    reference: torch.Tensor

    def __post_init__(self):
        mask = torch.as_tensor(self.mask)
        if mask.dim() != 2:
            raise ShapeMismatchError(f"mask must be 2-D (H, W), got {tuple(mask.shape)}")
        values = torch.unique(mask)
        if not all(v in (0, 1) for v in values.tolist()):
            raise ValueError("mask values must be exactly 0 or 1")
        if self.reference.dim() != 3:
            raise ShapeMismatchError(
                f"reference must be (C, H, W), got {tuple(self.reference.shape)}"
            )
        if tuple(mask.shape) != tuple(self.reference.shape[-2:]):
            raise ShapeMismatchError(
                f"mask shape {tuple(mask.shape)} does not match reference spatial dims "
                f"{tuple(self.reference.shape[-2:])}"
            )
        if not torch.isfinite(self.reference).all():
            raise ValueError("reference image must be finite")
        self.mask = mask.to(torch.bool)

    @classmethod
    def from_array(cls, mask_u8: np.ndarray, reference: torch.Tensor) -> "InpaintMask":
        """Threshold an 8-bit grayscale mask at 128."""
        binary = torch.from_numpy((np.asarray(mask_u8) >= MASK_THRESHOLD).astype(np.uint8))
        return cls(mask=binary, reference=reference)


def inpaint(
    denoiser: DenoiserBackbone,
    schedule: NoiseSchedule,
    guidance: GuidanceSpec,
    mask: InpaintMask,
    seed: int,
) -> torch.Tensor:
    """Regenerate the masked region of the reference under the guidance.

    The main noise stream follows the documented sampler order (init, one
    draw per step); the per-step replacement noise for the preserved region
    comes from a generator derived from the seed, never from the main
    stream.
    """
    g_main = torch_generator(seed)
    g_blend = torch_generator(derive_seed(seed, "inpaint-blend"))
    keep = ~mask.mask  # True where the reference is preserved
    reference = mask.reference.float()
    shape = tuple(reference.shape)
    sigmas = schedule.sigmas

    with torch.no_grad():
        x = float(sigmas[0]) * torch.randn(shape, generator=g_main)
        for i in range(schedule.steps):
            sigma_cur, sigma_next = float(sigmas[i]), float(sigmas[i + 1])
            try:
                eps_hat = guided_noise_prediction(denoiser, x, sigma_cur, guidance)
            except NumericError as err:
                raise SamplingError(str(err), step=i) from err
            rng_noise = torch.randn(shape, generator=g_main)
            x = euler_ancestral_step(x, sigma_cur, sigma_next, eps_hat, rng_noise)
            fresh = torch.randn(shape, generator=g_blend)
            # At the terminal sigma the preserved region is the reference itself.
            noised_ref = reference if sigma_next == 0.0 else reference + sigma_next * fresh
            x = torch.where(keep, noised_ref, x)
            if not torch.isfinite(x).all():
                raise SamplingError("sample became non-finite", step=i)
    return x
