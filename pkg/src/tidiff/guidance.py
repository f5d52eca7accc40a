"""Guidance: classifier-free steering and weighted concept combination.

The combined noise prediction is

    e = e_u + cfg_scale * sum_i w_i * (e_i - e_u)

where ``e_u`` is the unconditional prediction and ``e_i`` the prediction for
term i.  A single term with weight 1 and scale 1 collapses to the plain
conditional prediction (returned exactly, without the detour through
``e_u``); scale 0 collapses to the unconditional prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch

from .backbones import DenoiserBackbone
from .errors import NumericError


@dataclass(frozen=True)
class GuidanceSpec:
    """Weighted conditioning terms plus a guidance scale.

    ``unconditional`` is the context used for the unconditional branch;
    ``None`` selects the backbone's own unconditional input.
    """

    terms: tuple[tuple[torch.Tensor, float], ...]
    cfg_scale: float = 1.0
    unconditional: torch.Tensor | None = None

    def __post_init__(self):
        terms = tuple((ctx, float(w)) for ctx, w in self.terms)
        object.__setattr__(self, "terms", terms)
        if len(terms) == 0:
            raise ValueError("guidance needs at least one term")
        if any(not math.isfinite(w) for _, w in terms):
            raise ValueError("guidance weights must be finite")
        if not (math.isfinite(self.cfg_scale) and self.cfg_scale >= 0):
            raise ValueError(f"cfg_scale must be finite and >= 0, got {self.cfg_scale}")

    def active_terms(self) -> tuple[tuple[torch.Tensor, float], ...]:
        """Terms with non-zero weight; zero-weight terms are dropped before
        any denoiser call so they cost nothing and leave no numeric trace."""
        return tuple((c, w) for c, w in self.terms if w != 0.0)


def single_concept(context: torch.Tensor, cfg_scale: float = 1.0) -> GuidanceSpec:
    return GuidanceSpec(terms=((context, 1.0),), cfg_scale=cfg_scale)


def guided_noise_prediction(
    denoiser: DenoiserBackbone,
    x: torch.Tensor,
    sigma: float,
    guidance: GuidanceSpec,
) -> torch.Tensor:
    """Combine conditional and unconditional predictions at one sigma level."""
    terms = guidance.active_terms()
    scale = guidance.cfg_scale

    if scale == 0.0 or not terms:
        return _checked(denoiser.predict(x, sigma, guidance.unconditional), "unconditional")
    if scale == 1.0 and len(terms) == 1 and terms[0][1] == 1.0:
        return _checked(denoiser.predict(x, sigma, terms[0][0]), "conditional")

    e_u = _checked(denoiser.predict(x, sigma, guidance.unconditional), "unconditional")
    combined = torch.zeros_like(e_u)
    for i, (ctx, w) in enumerate(terms):
        e_i = _checked(denoiser.predict(x, sigma, ctx), f"term {i}")
        combined = combined + w * (e_i - e_u)
    return e_u + scale * combined


def _checked(pred: torch.Tensor, label: str) -> torch.Tensor:
    if not torch.isfinite(pred).all():
        raise NumericError(f"denoiser returned non-finite values for the {label} prediction")
    return pred
