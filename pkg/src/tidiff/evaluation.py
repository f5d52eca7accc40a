"""Distribution distance between image sets via Gaussian feature statistics.

The score is the Frechet distance between Gaussian fits of extracted
features:

    d^2 = ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))

The matrix square root is taken by symmetric eigendecomposition of the
symmetrized product with negative eigenvalues clamped to zero, which makes
the result reproducible across platforms and exactly symmetric in its
arguments.  Scores are only comparable within one extractor id.
"""
from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .datasets.manifest import DatasetManifest
from .errors import (
    BadMagicError,
    ChecksumError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .images import load_image
from .utils import torch_generator

STATS_MAGIC = b"FIDS"
STATS_VERSION = 1

# The weights of the default desk-scale extractor are drawn once from this
# seed; the seed is part of the extractor id.
TOY_EXTRACTOR_SEED = 20_240_601


@dataclass
class GaussianStats:
    """Sufficient statistics of a feature set: mean, covariance, count."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.n < 2:
            raise ValueError(f"need at least 2 samples, got n={self.n}")
        if self.mu.ndim != 1 or self.sigma.shape != (len(self.mu), len(self.mu)):
            raise ValueError(
                f"inconsistent stats shapes: mu {self.mu.shape}, sigma {self.sigma.shape}"
            )
        if not (np.isfinite(self.mu).all() and np.isfinite(self.sigma).all()):
            raise ValueError("statistics must be finite")
        if np.abs(self.sigma - self.sigma.T).max() > 1e-8:
            raise ValueError("covariance must be symmetric within 1e-8")

    @property
    def dim(self) -> int:
        return len(self.mu)


class FeatureExtractor:
    """Interface: deterministic image -> fixed-dim feature vector."""

    feature_dim: int
    extractor_id: str

    def extract_many(self, images: Iterable[np.ndarray]) -> np.ndarray:
        raise NotImplementedError


class ToyFeatureExtractor(FeatureExtractor):
    """Frozen random convolutional projection network.

    Three strided conv layers with fixed-seed weights followed by global
    average pooling.  No external weights required; the (seed, channels,
    dim) triple is embedded in the extractor id.
    """

    def __init__(self, channels: int = 1, feature_dim: int = 64, seed: int = TOY_EXTRACTOR_SEED):
        self.feature_dim = feature_dim
        self.channels = channels
        self.extractor_id = f"toy-rconv-v1-c{channels}-d{feature_dim}-seed{seed}"
        g = torch_generator(seed)
        self._net = nn.Sequential(
            nn.Conv2d(channels, 16, 5, stride=2, padding=2),
            nn.ReLU(),
            nn.Conv2d(16, 32, 5, stride=2, padding=2),
            nn.ReLU(),
            nn.Conv2d(32, feature_dim, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        with torch.no_grad():
            for p in self._net.parameters():
                if p.dim() > 1:
                    nn.init.orthogonal_(p.view(p.shape[0], -1), generator=g)
                else:
                    p.uniform_(-0.1, 0.1, generator=g)
        self._net.requires_grad_(False)
        self._net.eval()

    def extract_many(self, images, batch_size: int = 64) -> np.ndarray:
        stack = [np.asarray(im, dtype=np.float32) for im in images]
        for im in stack:
            if im.ndim != 3 or im.shape[0] != self.channels:
                raise ValueError(
                    f"extractor expects ({self.channels}, H, W) images, got {im.shape}"
                )
        feats = []
        with torch.no_grad():
            for i in range(0, len(stack), batch_size):
                batch = torch.from_numpy(np.stack(stack[i : i + batch_size])) * 2.0 - 1.0
                out = self._net(batch).squeeze(-1).squeeze(-1)
                feats.append(out.double().numpy())
        return np.concatenate(feats, axis=0)


def compute_stats(images: Sequence[np.ndarray], extractor: FeatureExtractor) -> GaussianStats:
    """Sample mean and unbiased covariance of the extracted features."""
    images = list(images)
    if len(images) < 2:
        raise ValueError(f"need at least 2 images, got {len(images)}")
    feats = extractor.extract_many(images)
    mu = feats.mean(axis=0)
    sigma = np.cov(feats, rowvar=False, ddof=1)
    sigma = np.atleast_2d(sigma)
    return GaussianStats(mu=mu, sigma=sigma, n=len(images))


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Closed-form Frechet distance between two Gaussian fits (clamped >= 0)."""
    if a.dim != b.dim:
        raise ValueError(f"feature dims differ: {a.dim} vs {b.dim}")
    diff = a.mu - b.mu
    product = a.sigma @ b.sigma
    sym = (product + product.T) / 2.0
    eigvals = np.linalg.eigvalsh(sym)
    trace_sqrt = np.sum(np.sqrt(np.clip(eigvals, 0.0, None)))
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * trace_sqrt)
    return max(value, 0.0)


@dataclass
class FidReport:
    value: float
    n_real: int
    n_generated: int
    extractor_id: str

    def to_dict(self) -> dict:
        return {
            "fid": self.value,
            "n_real": self.n_real,
            "n_generated": self.n_generated,
            "extractor_id": self.extractor_id,
        }


def fid(
    real: Sequence[np.ndarray] | DatasetManifest,
    generated: Sequence[np.ndarray] | str | Path,
    extractor: FeatureExtractor,
    max_real: int | None = None,
    real_split: str | None = None,
) -> FidReport:
    """Frechet distance between a real set and a generated set.

    ``real`` may be a manifest (images are loaded from it) or a sequence of
    arrays; ``generated`` may be a directory of PNGs or a sequence of arrays.
    """
    real_images = _collect_real(real, max_real, real_split)
    gen_images = _collect_generated(generated)
    if len(real_images) == 0 or len(gen_images) == 0:
        raise ValueError("both image sets must be non-empty")
    stats_real = compute_stats(real_images, extractor)
    stats_gen = compute_stats(gen_images, extractor)
    return FidReport(
        value=frechet_distance(stats_real, stats_gen),
        n_real=len(real_images),
        n_generated=len(gen_images),
        extractor_id=extractor.extractor_id,
    )


def _collect_real(real, max_real, split):
    if isinstance(real, DatasetManifest):
        records = real.subset(split=split)
        if max_real is not None:
            records = records[:max_real]
        return [load_image(real.resolve_path(r)) for r in records]
    images = list(real)
    return images[:max_real] if max_real is not None else images


def _collect_generated(generated):
    if isinstance(generated, (str, Path)):
        paths = sorted(Path(generated).glob("*.png"))
        return [load_image(p) for p in paths]
    return list(generated)


def image_set_hash(images: Sequence[np.ndarray]) -> str:
    h = hashlib.sha256()
    for im in images:
        h.update(np.ascontiguousarray(im, dtype=np.float32).tobytes())
    return h.hexdigest()


def save_stats(path: str | Path, stats: GaussianStats, extractor_id: str, content_hash: str = "") -> Path:
    """Binary stats cache: magic, version, ids, dims, float64 LE payload, CRC32."""
    ext = extractor_id.encode("utf-8")
    ch = content_hash.encode("utf-8")
    body = (
        STATS_MAGIC
        + struct.pack("<H", STATS_VERSION)
        + struct.pack("<H", len(ext))
        + ext
        + struct.pack("<H", len(ch))
        + ch
        + struct.pack("<IQ", stats.dim, stats.n)
        + stats.mu.astype("<f8").tobytes()
        + stats.sigma.astype("<f8").tobytes()
    )
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def load_stats(path: str | Path) -> tuple[GaussianStats, str, str]:
    """Read a stats cache; returns (stats, extractor_id, content_hash)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:4] != STATS_MAGIC:
        raise BadMagicError(f"{path}: not a stats cache file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != STATS_VERSION:
        raise VersionMismatchError(f"{path}: unsupported stats version {version}")
    offset = 6
    try:
        (ext_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        extractor_id = blob[offset : offset + ext_len].decode("utf-8")
        offset += ext_len
        (ch_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        content_hash = blob[offset : offset + ch_len].decode("utf-8")
        offset += ch_len
        dim, n = struct.unpack_from("<IQ", blob, offset)
        offset += 12
        mu_bytes = dim * 8
        sigma_bytes = dim * dim * 8
        if len(blob) < offset + mu_bytes + sigma_bytes + 4:
            raise TruncatedPayloadError(f"{path}: stats payload truncated")
        mu = np.frombuffer(blob, dtype="<f8", count=dim, offset=offset).copy()
        sigma = (
            np.frombuffer(blob, dtype="<f8", count=dim * dim, offset=offset + mu_bytes)
            .reshape(dim, dim)
            .copy()
        )
        body_end = offset + mu_bytes + sigma_bytes
    except struct.error as err:
        raise TruncatedPayloadError(f"{path}: stats header truncated") from err
    (stored_crc,) = struct.unpack_from("<I", blob, body_end)
    if stored_crc != (zlib.crc32(blob[:body_end]) & 0xFFFFFFFF):
        raise ChecksumError(f"{path}: CRC mismatch")
    return GaussianStats(mu=mu, sigma=sigma, n=n), extractor_id, content_hash
