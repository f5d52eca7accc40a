"""Denoiser backbones.

A backbone predicts the noise component of a noisy input at a given sigma,
optionally steered by a conditioning vector.  The built-in backbone is a
small convolutional network sized for CPU-scale experiments; real diffusion
weights can be plugged in behind the same interface.
"""
from __future__ import annotations

import math
from abc import abstractmethod

import torch
import torch.nn as nn

from .errors import ShapeMismatchError

# Floor for the log-sigma feature so sigma == 0 stays finite.
_SIGMA_FLOOR = 1e-8


class DenoiserBackbone(nn.Module):
    """Interface: ``predict(noisy, sigma, context) -> noise estimate``.

    Implementations must be deterministic given (input, sigma, context,
    parameters) and must return a tensor with the input's shape.  A context
    of ``None`` is the distinguished unconditional input.
    """

    @abstractmethod
    def predict(
        self,
        noisy: torch.Tensor,
        sigma: float | torch.Tensor,
        context: torch.Tensor | None,
    ) -> torch.Tensor:
        raise NotImplementedError

    def freeze(self) -> "DenoiserBackbone":
        """Stop gradient flow into the backbone parameters."""
        self.requires_grad_(False)
        self.eval()
        return self

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())


class ToyDenoiser(DenoiserBackbone):
    """Small conditional conv net operating directly in pixel space.

    Layout: a full-resolution stem, a strided trunk at half resolution with
    dilated 3x3 convolutions, then upsample and fuse with the stem skip.
    Sigma enters as a constant log-sigma feature map; the conditioning
    vector enters as a per-channel bias at every trunk block.

    Inputs and outputs are preconditioned so the inner network sees
    unit-scale activations at every noise level: the input is scaled by
    1/sqrt(sigma^2 + sigma_data^2) and the noise estimate is assembled as

        eps_hat = x * sigma / (sigma^2 + sd^2) - sd / sqrt(sigma^2 + sd^2) * F(x)

    which keeps the externally visible contract (predict the noise) intact.
    """

    def __init__(
        self,
        channels: int = 1,
        hidden: int = 20,
        stem_width: int = 10,
        cond_dim: int = 32,
        sigma_data: float = 0.5,
    ):
        super().__init__()
        self.channels = channels
        self.hidden = hidden
        self.stem_width = stem_width
        self.cond_dim = cond_dim
        self.sigma_data = sigma_data
        self.stem = nn.Conv2d(channels + 1, stem_width, 3, padding=1)
        self.down = nn.Conv2d(stem_width, hidden, 3, stride=2, padding=1)
        self.block1 = nn.Conv2d(hidden, hidden, 3, padding=1)
        self.block2 = nn.Conv2d(hidden, hidden, 3, padding=2, dilation=2)
        self.block3 = nn.Conv2d(hidden, hidden, 3, padding=4, dilation=4)
        self.cond_proj = nn.ModuleList(
            [nn.Linear(cond_dim, hidden) for _ in range(3)]
        )
        self.fuse = nn.Conv2d(hidden + stem_width, hidden, 1)
        self.out = nn.Conv2d(hidden, channels, 3, padding=1)

    def config(self) -> dict:
        return {
            "channels": self.channels,
            "hidden": self.hidden,
            "stem_width": self.stem_width,
            "cond_dim": self.cond_dim,
            "sigma_data": self.sigma_data,
        }

    def predict(self, noisy, sigma, context=None):
        x, squeeze = _as_batched(noisy)
        b = x.shape[0]
        sig = _sigma_column(sigma, b, x.dtype).view(b, 1, 1, 1)

        sd = self.sigma_data
        var = sig.square() + sd**2
        c_in = var.rsqrt()
        logsig = sig.clamp_min(_SIGMA_FLOOR).log() / 4.0
        smap = logsig.expand(b, 1, *x.shape[-2:])

        if context is None:
            ctx = x.new_zeros(b, self.cond_dim)
        else:
            ctx = context.to(x.dtype)
            if ctx.dim() == 1:
                ctx = ctx.unsqueeze(0).expand(b, -1)
            if ctx.shape != (b, self.cond_dim):
                raise ShapeMismatchError(
                    f"context shape {tuple(context.shape)} does not match (batch={b}, cond_dim={self.cond_dim})"
                )

        stem = torch.relu(self.stem(torch.cat([x * c_in, smap], dim=1)))
        h = torch.relu(self.down(stem))
        for block, proj in zip([self.block1, self.block2, self.block3], self.cond_proj):
            h = torch.relu(block(h) + proj(ctx).unsqueeze(-1).unsqueeze(-1))
        h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
        h = torch.relu(self.fuse(torch.cat([h, stem], dim=1)))
        raw = self.out(h)

        eps = x * (sig / var) - (sd * c_in) * raw
        return eps.squeeze(0) if squeeze else eps


def _as_batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ShapeMismatchError(f"expected (C,H,W) or (B,C,H,W), got shape {tuple(x.shape)}")


def _sigma_column(sigma, batch: int, dtype) -> torch.Tensor:
    """Normalize scalar or per-sample sigma into a (batch,) tensor."""
    if isinstance(sigma, torch.Tensor) and sigma.dim() > 0:
        if sigma.shape != (batch,):
            raise ShapeMismatchError(
                f"per-sample sigma must have shape ({batch},), got {tuple(sigma.shape)}"
            )
        return sigma.to(dtype)
    value = float(sigma)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"sigma must be finite and >= 0, got {value}")
    return torch.full((batch,), value, dtype=dtype)
