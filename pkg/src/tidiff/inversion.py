"""Concept-embedding inversion against a frozen denoiser.

Only the embedding vectors receive gradient updates; the denoiser and the
conditioner are frozen and their parameter fingerprint is checked before
and after every run.  The training context is exactly the embedding itself
(no prompt templates), and the noise level for each step is drawn uniformly
from the schedule ladder.
"""
from __future__ import annotations

import json
import struct
import zlib
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .backbones import DenoiserBackbone
from .conditioning import MAX_VECTORS_PER_TOKEN, ConceptEmbedding, TextConditioner
from .errors import (
    BadMagicError,
    ChecksumError,
    ShapeMismatchError,
    TrainingAbortedError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .sampler import forward_diffuse
from .schedule import NoiseSchedule, build_schedule
from .utils import parameter_fingerprint, torch_generator

INIT_STD = 0.02

EMBEDDING_MAGIC = b"TIEM"
EMBEDDING_VERSION = 1
MAX_EMBEDDING_FILE_BYTES = 1 << 20  # serialized embeddings stay under 1 MB
EMBEDDING_SUFFIX = ".tiemb"


@dataclass
class TIConfig:
    """Inversion training hyperparameters."""

    learning_rate: float = 0.005
    steps: int = 50_000
    batch_size: int = 1
    n_vectors: int = 64
    seed: int = 0
    ema_decay: float = 0.99
    checkpoint_every: int = 5_000
    checkpoint_keep: int = 3

    def __post_init__(self):
        for name in ("learning_rate", "steps", "batch_size", "n_vectors"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class TrainingState:
    """Step counter, running loss and the checkpoint ring."""

    step: int = 0
    loss_ema: float | None = None
    ema_decay: float = 0.99
    ema_trace: list = field(default_factory=list)
    checkpoints: deque = field(default_factory=deque)

    def update(self, loss: float):
        self.step += 1
        if self.loss_ema is None:
            self.loss_ema = loss
        else:
            self.loss_ema = self.ema_decay * self.loss_ema + (1 - self.ema_decay) * loss


def init_embedding(
    name: str,
    n_vectors: int,
    dim: int,
    init_source: str = "random-normal",
    seed: int = 0,
    conditioner: TextConditioner | None = None,
) -> ConceptEmbedding:
    """Create a fresh embedding.

    ``init_source`` is either ``"random-normal"`` (N(0, 0.02), deterministic
    per seed) or ``"copy:<token>"`` to tile an existing vocabulary token of
    the supplied conditioner.
    """
    if not (1 <= n_vectors <= MAX_VECTORS_PER_TOKEN):
        raise ValueError(f"n_vectors must be in [1, {MAX_VECTORS_PER_TOKEN}], got {n_vectors}")
    if conditioner is not None and conditioner.dim != dim:
        raise ShapeMismatchError(f"dim {dim} does not match conditioner dim {conditioner.dim}")
    if init_source == "random-normal":
        g = torch_generator(seed)
        vectors = INIT_STD * torch.randn(n_vectors, dim, generator=g)
    elif init_source.startswith("copy:"):
        if conditioner is None:
            raise ValueError("copy initialization needs a conditioner")
        token = init_source.split(":", 1)[1]
        row = conditioner.token_rows(token)
        vectors = row.detach().clone().expand(n_vectors, dim).contiguous()
    else:
        raise ValueError(f"unknown init_source {init_source!r}")
    return ConceptEmbedding(name=name, vectors=vectors)


def ti_loss(
    denoiser: DenoiserBackbone,
    conditioner: TextConditioner,
    embedding: ConceptEmbedding,
    x0: torch.Tensor,
    sigma,
    eps: torch.Tensor,
) -> torch.Tensor:
    """Noise-matching loss: MSE between eps and the denoiser's estimate of it
    on the diffused input, conditioned on the bare embedding."""
    if x0.shape != eps.shape:
        raise ShapeMismatchError(
            f"eps shape {tuple(eps.shape)} does not match x0 shape {tuple(x0.shape)}"
        )
    context = conditioner.encode([embedding])
    noisy = forward_diffuse(x0, sigma, eps)
    pred = denoiser.predict(noisy, sigma, context)
    return torch.mean((pred - eps) ** 2)


def train_embedding(
    dataset: Sequence[torch.Tensor],
    config: TIConfig,
    denoiser: DenoiserBackbone,
    conditioner: TextConditioner,
    name: str = "<concept>",
    schedule: NoiseSchedule | None = None,
    init_source: str = "random-normal",
    checkpoint_dir: str | Path | None = None,
    log_every: int = 100,
) -> ConceptEmbedding:
    """Optimize a concept embedding on a set of images.

    The denoiser and conditioner are frozen; a parameter fingerprint taken
    before and after training must be identical or the run fails.  Adam with
    a constant learning rate drives only ``embedding.vectors``.  Determinism:
    the same (seed, config, dataset) yields an identical final embedding.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if schedule is None:
        schedule = build_schedule(100)

    images = torch.stack([t if t.dim() == 3 else t.unsqueeze(0) for t in dataset]).float()
    denoiser.freeze()
    conditioner.requires_grad_(False)
    fingerprint_before = parameter_fingerprint(denoiser, conditioner)

    embedding = init_embedding(
        name, config.n_vectors, conditioner.dim, init_source, seed=config.seed,
        conditioner=conditioner,
    )
    vectors = embedding.vectors.requires_grad_(True)
    optimizer = torch.optim.Adam([vectors], lr=config.learning_rate)

    ladder = torch.as_tensor(schedule.training_sigmas(), dtype=torch.float32)
    g = torch_generator(config.seed)
    state = TrainingState(ema_decay=config.ema_decay)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for step in range(config.steps):
        idx = torch.randint(len(images), (config.batch_size,), generator=g)
        x0 = images[idx]
        sigma = ladder[torch.randint(len(ladder), (config.batch_size,), generator=g)]
        eps = torch.randn(x0.shape, generator=g)

        loss = ti_loss(denoiser, conditioner, embedding, x0, sigma, eps)
        value = float(loss.detach())
        if not torch.isfinite(loss):
            raise TrainingAbortedError("non-finite inversion loss", step=step)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        state.update(value)
        if state.step % log_every == 0 or state.step == config.steps:
            state.ema_trace.append((state.step, state.loss_ema))
        if ckpt_dir is not None and state.step % config.checkpoint_every == 0:
            _rotate_checkpoint(ckpt_dir, embedding, state, config)

    fingerprint_after = parameter_fingerprint(denoiser, conditioner)
    if fingerprint_before != fingerprint_after:
        raise RuntimeError("frozen denoiser/conditioner parameters changed during inversion")

    result = embedding.detached()
    result.metadata = {
        "name": name,
        "config": asdict(config),
        "n_images": len(images),
        "init_source": init_source,
        "sigma_sampling": "uniform-ladder",
        "schedule": {
            "steps": schedule.steps,
            "sigma_min": schedule.sigma_min,
            "sigma_max": schedule.sigma_max,
            "rho": schedule.rho,
        },
        "final_loss_ema": state.loss_ema,
        "loss_ema_trace": state.ema_trace,
        "frozen_fingerprint": fingerprint_before,
    }
    return result


def _rotate_checkpoint(ckpt_dir: Path, embedding: ConceptEmbedding, state: TrainingState, config: TIConfig):
    path = ckpt_dir / f"step{state.step:07d}{EMBEDDING_SUFFIX}"
    snapshot = ConceptEmbedding(embedding.name, embedding.vectors.detach().clone(),
                                {"step": state.step, "loss_ema": state.loss_ema})
    save_embedding(snapshot, path)
    state.checkpoints.append(path)
    while len(state.checkpoints) > config.checkpoint_keep:
        stale = state.checkpoints.popleft()
        stale.unlink(missing_ok=True)
        Path(str(stale) + ".json").unlink(missing_ok=True)


def save_embedding(embedding: ConceptEmbedding, path: str | Path) -> Path:
    """Write the compact binary embedding file (plus a JSON metadata sidecar).

    Layout: magic ``TIEM``, version u16, name length u16 + UTF-8 name,
    n_vectors u32, dim u32, float32 little-endian row-major payload, and a
    trailing CRC32 over everything before it.
    """
    path = Path(path)
    name_bytes = embedding.name.encode("utf-8")
    payload = embedding.vectors.detach().to(torch.float32).contiguous().numpy()
    if payload.dtype.byteorder == ">":  # pragma: no cover - big-endian hosts
        payload = payload.byteswap()
    body = (
        EMBEDDING_MAGIC
        + struct.pack("<H", EMBEDDING_VERSION)
        + struct.pack("<H", len(name_bytes))
        + name_bytes
        + struct.pack("<II", embedding.n_vectors, embedding.dim)
        + payload.tobytes()
    )
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    if len(blob) > MAX_EMBEDDING_FILE_BYTES:
        raise ValueError(
            f"serialized embedding is {len(blob)} bytes; the format caps files at "
            f"{MAX_EMBEDDING_FILE_BYTES} bytes"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    if embedding.metadata:
        Path(str(path) + ".json").write_text(json.dumps(embedding.metadata, indent=2))
    return path


def load_embedding(path: str | Path) -> ConceptEmbedding:
    """Read an embedding file; the vector payload round-trips bit-exactly."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:4] != EMBEDDING_MAGIC:
        raise BadMagicError(f"{path}: not an embedding file (bad magic)")
    if len(blob) < 8:
        raise TruncatedPayloadError(f"{path}: header truncated")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != EMBEDDING_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported embedding format version {version} "
            f"(expected {EMBEDDING_VERSION})"
        )
    (name_len,) = struct.unpack_from("<H", blob, 6)
    offset = 8
    if len(blob) < offset + name_len + 8:
        raise TruncatedPayloadError(f"{path}: header truncated")
    name = blob[offset : offset + name_len].decode("utf-8")
    offset += name_len
    n_vectors, dim = struct.unpack_from("<II", blob, offset)
    offset += 8
    payload_bytes = n_vectors * dim * 4
    if len(blob) < offset + payload_bytes + 4:
        raise TruncatedPayloadError(
            f"{path}: payload truncated (expected {payload_bytes} bytes of vectors)"
        )
    body_end = offset + payload_bytes
    (stored_crc,) = struct.unpack_from("<I", blob, body_end)
    actual_crc = zlib.crc32(blob[:body_end]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: CRC mismatch ({stored_crc:#x} != {actual_crc:#x})")

    import numpy as np

    vectors = torch.from_numpy(
        np.frombuffer(blob[offset:body_end], dtype="<f4").reshape(n_vectors, dim).copy()
    )
    metadata: dict = {}
    sidecar = Path(str(path) + ".json")
    if sidecar.exists():
        metadata = json.loads(sidecar.read_text())
    return ConceptEmbedding(name=name, vectors=vectors, metadata=metadata)


class EmbeddingRegistry:
    """Name -> ConceptEmbedding lookup used by prompt parsing."""

    def __init__(self, embeddings: Sequence[ConceptEmbedding] = ()):
        self._by_name: dict[str, ConceptEmbedding] = {}
        for emb in embeddings:
            self.register(emb)

    def register(self, embedding: ConceptEmbedding):
        self._by_name[embedding.name] = embedding

    def resolve(self, name: str) -> ConceptEmbedding:
        try:
            return self._by_name[name]
        except KeyError:
            known = ", ".join(sorted(self._by_name)) or "(none)"
            raise ValueError(f"unknown concept {name!r}; known concepts: {known}") from None

    def names(self) -> list[str]:
        return sorted(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @classmethod
    def from_dir(cls, directory: str | Path) -> "EmbeddingRegistry":
        reg = cls()
        for path in sorted(Path(directory).glob(f"*{EMBEDDING_SUFFIX}")):
            reg.register(load_embedding(path))
        return reg
