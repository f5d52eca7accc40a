"""Forward diffusion and the ancestral Euler sampling loop.

Noise-draw order per run is fixed and documented: one draw for the initial
state, then exactly one draw per ancestral step, all from a single seeded
generator.  Auxiliary streams (e.g. inpainting) must use their own derived
generator so this order is never disturbed.
"""
from __future__ import annotations

import math
from typing import Sequence

import torch

from .backbones import DenoiserBackbone
from .errors import NumericError, SamplingError, ShapeMismatchError
from .guidance import GuidanceSpec, guided_noise_prediction
from .schedule import NoiseSchedule
from .utils import torch_generator


def forward_diffuse(x0: torch.Tensor, sigma: float, eps: torch.Tensor) -> torch.Tensor:
    """Variance-exploding forward process: ``x0 + sigma * eps``."""
    if x0.shape != eps.shape:
        raise ShapeMismatchError(
            f"eps shape {tuple(eps.shape)} does not match x0 shape {tuple(x0.shape)}"
        )
    if isinstance(sigma, torch.Tensor) and sigma.dim() > 0:
        sig = sigma.reshape(-1, *([1] * (x0.dim() - 1)))
        return x0 + sig * eps
    sigma = float(sigma)
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    return x0 + sigma * eps


def ancestral_sigmas(sigma_cur: float, sigma_next: float) -> tuple[float, float]:
    """(sigma_down, sigma_up) for one ancestral step.

    sigma_up^2 = sigma_next^2 * (sigma_cur^2 - sigma_next^2) / sigma_cur^2
    sigma_down = sqrt(sigma_next^2 - sigma_up^2)
    """
    if not sigma_cur > sigma_next >= 0:
        raise ValueError(
            f"need sigma_cur > sigma_next >= 0, got sigma_cur={sigma_cur}, sigma_next={sigma_next}"
        )
    sigma_up = math.sqrt(sigma_next**2 * (sigma_cur**2 - sigma_next**2) / sigma_cur**2)
    sigma_down = math.sqrt(max(sigma_next**2 - sigma_up**2, 0.0))
    return sigma_down, sigma_up


def euler_ancestral_step(
    x: torch.Tensor,
    sigma_cur: float,
    sigma_next: float,
    noise_pred: torch.Tensor,
    rng_noise: torch.Tensor,
) -> torch.Tensor:
    """One ancestral Euler update.

    Steps down to sigma_down along the predicted noise direction, then
    re-injects sigma_up of fresh noise.  With ``sigma_next == 0`` the
    injected-noise coefficient is exactly zero, so the result does not
    depend on ``rng_noise``.
    """
    if x.shape != noise_pred.shape or x.shape != rng_noise.shape:
        raise ShapeMismatchError("x, noise_pred and rng_noise must share a shape")
    sigma_down, sigma_up = ancestral_sigmas(sigma_cur, sigma_next)
    out = x + (sigma_down - sigma_cur) * noise_pred
    if sigma_up > 0.0:
        out = out + sigma_up * rng_noise
    return out


def sample(
    denoiser: DenoiserBackbone,
    schedule: NoiseSchedule,
    guidance: GuidanceSpec,
    seed: int,
    shape: tuple[int, ...],
) -> torch.Tensor:
    """Draw one sample by walking the sigma ladder down to zero.

    Deterministic for fixed (seed, guidance, parameters): the same call
    yields a bit-identical tensor.
    """
    g = torch_generator(seed)
    sigmas = schedule.sigmas
    with torch.no_grad():
        x = float(sigmas[0]) * torch.randn(shape, generator=g)
        for i in range(schedule.steps):
            sigma_cur, sigma_next = float(sigmas[i]), float(sigmas[i + 1])
            try:
                eps_hat = guided_noise_prediction(denoiser, x, sigma_cur, guidance)
            except NumericError as err:
                raise SamplingError(str(err), step=i) from err
            rng_noise = torch.randn(shape, generator=g)
            x = euler_ancestral_step(x, sigma_cur, sigma_next, eps_hat, rng_noise)
            if not torch.isfinite(x).all():
                raise SamplingError("sample became non-finite", step=i)
    return x


def sample_many(
    denoiser: DenoiserBackbone,
    schedule: NoiseSchedule,
    guidance: GuidanceSpec,
    seeds: Sequence[int],
    shape: tuple[int, ...],
) -> torch.Tensor:
    """Batched sampling, one independent noise stream per seed.

    Each seed's draws follow the same order as in :func:`sample`, so the
    k-th output matches ``sample(..., seeds[k], shape)`` up to conv batching
    effects (bit-identical in practice on CPU).
    """
    gens = [torch_generator(s) for s in seeds]
    sigmas = schedule.sigmas
    with torch.no_grad():
        x = torch.stack([float(sigmas[0]) * torch.randn(shape, generator=g) for g in gens])
        for i in range(schedule.steps):
            sigma_cur, sigma_next = float(sigmas[i]), float(sigmas[i + 1])
            try:
                eps_hat = guided_noise_prediction(denoiser, x, sigma_cur, guidance)
            except NumericError as err:
                raise SamplingError(str(err), step=i) from err
            rng_noise = torch.stack([torch.randn(shape, generator=g) for g in gens])
            x = euler_ancestral_step(x, sigma_cur, sigma_next, eps_hat, rng_noise)
            if not torch.isfinite(x).all():
                raise SamplingError("sample became non-finite", step=i)
    return x
