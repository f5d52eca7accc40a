"""Pretraining the built-in toy denoiser.

The toolkit's inversion and sampling paths assume a pretrained, frozen
denoiser (in production a large latent diffusion model).  At desk scale
this module supplies the stand-in: a small conditional conv net trained on
a toy corpus with lesion-salience-aware conditioning, so the conditioning
axis from "healthy-base" to "diseased-base" is continuously covered and a
meaningful unconditional branch exists for guidance.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from .backbones import ToyDenoiser
from .conditioning import ToyConditioner
from .datasets.manifest import DatasetManifest
from .errors import TrainingAbortedError
from .images import load_image, to_model_space
from .sampler import forward_diffuse
from .schedule import build_schedule
from .utils import torch_generator


@dataclass
class PretrainConfig:
    steps: int = 4_000
    batch_size: int = 16
    learning_rate: float = 2e-3
    uncond_prob: float = 0.15  # conditioning dropout to keep an unconditional branch
    cond_noise: float = 0.02
    seed: int = 0
    hidden: int = 24
    cond_dim: int = 32
    channels: int = 1
    schedule_steps: int = 100
    sigma_min: float = 0.02
    sigma_max: float = 10.0
    rho: float = 7.0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")


def load_manifest_images(manifest: DatasetManifest, split: str | None = None) -> torch.Tensor:
    """All images of a manifest (optionally one split) in model space."""
    records = manifest.subset(split=split)
    if not records:
        raise ValueError(f"manifest has no records for split {split!r}")
    return torch.stack([to_model_space(load_image(manifest.resolve_path(r))) for r in records])


def salience_conditioning(manifest: DatasetManifest, conditioner: ToyConditioner,
                          split: str | None = None) -> torch.Tensor:
    """Per-image conditioning: blend healthy-base -> diseased-base by lesion salience."""
    healthy = conditioner.encode(["healthy-base"])
    diseased = conditioner.encode(["diseased-base"])
    rows = []
    for r in manifest.subset(split=split):
        s = float(r.extra.get("salience", 1.0 if r.label == "diseased" else 0.0))
        rows.append((1.0 - s) * healthy + s * diseased)
    return torch.stack(rows)


def pretrain_denoiser(
    manifest: DatasetManifest,
    config: PretrainConfig = PretrainConfig(),
    split: str | None = None,
    log_every: int = 500,
    progress: bool = False,
) -> tuple[ToyDenoiser, ToyConditioner, dict]:
    """Train the toy denoiser on a toy corpus; returns (denoiser, conditioner, log)."""
    conditioner = ToyConditioner(dim=config.cond_dim)
    images = load_manifest_images(manifest, split)
    cond = salience_conditioning(manifest, conditioner, split)
    schedule = build_schedule(config.schedule_steps, config.sigma_min, config.sigma_max, config.rho)
    ladder = torch.as_tensor(schedule.training_sigmas(), dtype=torch.float32)

    denoiser = ToyDenoiser(channels=config.channels, hidden=config.hidden, cond_dim=config.cond_dim)
    g = torch_generator(config.seed)
    # deterministic init from the run seed
    with torch.no_grad():
        for p in denoiser.parameters():
            if p.dim() > 1:
                torch.nn.init.kaiming_uniform_(p, a=5**0.5, generator=g)
            else:
                p.zero_()

    optimizer = torch.optim.Adam(denoiser.parameters(), lr=config.learning_rate)
    ema = None
    trace = []
    for step in range(config.steps):
        idx = torch.randint(len(images), (config.batch_size,), generator=g)
        x0 = images[idx]
        sigma = ladder[torch.randint(len(ladder), (config.batch_size,), generator=g)]
        eps = torch.randn(x0.shape, generator=g)
        ctx = cond[idx] + config.cond_noise * torch.randn(
            (config.batch_size, config.cond_dim), generator=g
        )
        drop = torch.rand(config.batch_size, generator=g) < config.uncond_prob
        ctx = torch.where(drop.unsqueeze(1), torch.zeros_like(ctx), ctx)

        pred = denoiser.predict(forward_diffuse(x0, sigma, eps), sigma, ctx)
        loss = torch.mean((pred - eps) ** 2)
        if not torch.isfinite(loss):
            raise TrainingAbortedError("non-finite pretraining loss", step=step)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        value = float(loss.detach())
        ema = value if ema is None else 0.99 * ema + 0.01 * value
        if (step + 1) % log_every == 0:
            trace.append((step + 1, ema))
            if progress:
                print(f"pretrain step {step + 1}/{config.steps}  loss_ema={ema:.4f}")

    denoiser.freeze()
    log = {"config": asdict(config), "loss_ema_trace": trace, "final_loss_ema": ema,
           "n_images": len(images)}
    return denoiser, conditioner, log


def save_denoiser(path: str | Path, denoiser: ToyDenoiser, conditioner: ToyConditioner,
                  log: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": "tidiff-toy-denoiser",
            "version": 1,
            "denoiser_config": denoiser.config(),
            "denoiser_state": denoiser.state_dict(),
            "conditioner_config": conditioner.config(),
            "conditioner_state": conditioner.state_dict(),
            "log": log or {},
        },
        path,
    )
    return path


def load_denoiser(path: str | Path) -> tuple[ToyDenoiser, ToyConditioner]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    if payload.get("format") != "tidiff-toy-denoiser":
        raise ValueError(f"{path}: not a toy denoiser checkpoint")
    denoiser = ToyDenoiser(**payload["denoiser_config"])
    denoiser.load_state_dict(payload["denoiser_state"])
    denoiser.freeze()
    cfg = payload["conditioner_config"]
    conditioner = ToyConditioner(
        dim=cfg["dim"], vocab_seed=cfg["vocab_seed"], vocab_names=cfg["vocab_names"]
    )
    conditioner.load_state_dict(payload["conditioner_state"])
    conditioner.requires_grad_(False)
    return denoiser, conditioner
