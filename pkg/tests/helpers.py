"""Shared test doubles and small utilities."""
from __future__ import annotations

import numpy as np
import torch

from tidiff.backbones import DenoiserBackbone
from tidiff.evaluation import FeatureExtractor


class StubDenoiser(DenoiserBackbone):
    """Returns fixed tensors per conditioning context (matched exactly)."""

    def __init__(self, unconditional: torch.Tensor, pairs: list[tuple[torch.Tensor, torch.Tensor]]):
        super().__init__()
        self.unconditional = unconditional
        self.pairs = pairs

    def predict(self, noisy, sigma, context=None):
        if context is None:
            return self.unconditional.clone()
        for ctx, out in self.pairs:
            if torch.equal(ctx, context):
                return out.clone()
        raise AssertionError("stub saw an unexpected context")


class FuncDenoiser(DenoiserBackbone):
    """Wraps an arbitrary callable (noisy, sigma, context) -> tensor."""

    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def predict(self, noisy, sigma, context=None):
        return self.fn(noisy, sigma, context)


class PassthroughExtractor(FeatureExtractor):
    """Treats each 'image' as its own feature vector."""

    def __init__(self, feature_dim: int):
        self.feature_dim = feature_dim
        self.extractor_id = f"passthrough-d{feature_dim}"

    def extract_many(self, images):
        return np.asarray([np.asarray(im, dtype=np.float64).ravel() for im in images])


def random_psd(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim))
    return a @ a.T / dim + 1e-3 * np.eye(dim)


def brute_force_auc(scores) -> float:
    pos = [s for s, label in scores if label == 1]
    neg = [s for s, label in scores if label == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))
