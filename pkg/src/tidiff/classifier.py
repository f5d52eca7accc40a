"""Binary classifier harness for real/synthetic augmentation studies.

Trains a pluggable backbone on a mix of real and synthetic images, tracks
validation AUC during training, and reports the test AUC of the best
validation checkpoint exactly once.  Case-id overlap between train and
val/test is a hard error.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
from scipy.ndimage import affine_transform
from scipy.stats import rankdata

from .datasets.manifest import DatasetManifest, SliceRecord
from .errors import SplitLeakError, TrainingAbortedError
from .images import load_image
from .utils import derive_seed, stable_hash, torch_generator

POSITIVE_LABEL = "diseased"


# ---------------------------------------------------------------------------
# AUC

def auc(scores: Sequence[tuple[float, int]]) -> float:
    """Rank-based (Mann-Whitney) AUC; ties contribute 0.5 per pair."""
    values = np.asarray([s for s, _ in scores], dtype=np.float64)
    labels = np.asarray([int(l) for _, l in scores])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(values)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# Augmentation

@dataclass(frozen=True)
class AugmentConfig:
    """Transform probabilities and ranges; all logged into the config hash.

    Draw order is fixed: flip, affine (rotation/scale/translation), gamma,
    noise, channel dropout.
    """

    flip_p: float = 0.5
    affine_p: float = 1.0
    rotation_deg: float = 10.0
    scale_range: tuple = (0.9, 1.1)
    translate_frac: float = 0.1
    intensity_p: float = 1.0
    gamma_range: tuple = (0.8, 1.25)
    noise_p: float = 1.0
    noise_std_max: float = 0.05
    channel_dropout_p: float = 0.1

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(flip_p=0.0, affine_p=0.0, intensity_p=0.0, noise_p=0.0, channel_dropout_p=0.0)


def horizontal_flip(image: np.ndarray) -> np.ndarray:
    """Mirror along the width axis; an involution."""
    return np.ascontiguousarray(image[..., ::-1])


def augment(image: np.ndarray, seed: int, config: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Stochastic augmentation, deterministic per (image, seed).

    With every probability forced to zero the input is returned unchanged.
    """
    rng = np.random.default_rng(seed)
    out = np.asarray(image, dtype=np.float32)

    if config.flip_p > 0 and rng.uniform() < config.flip_p:
        out = horizontal_flip(out)

    if config.affine_p > 0 and rng.uniform() < config.affine_p:
        theta = math.radians(rng.uniform(-config.rotation_deg, config.rotation_deg))
        scale = rng.uniform(*config.scale_range)
        h, w = out.shape[-2:]
        ty = rng.uniform(-config.translate_frac, config.translate_frac) * h
        tx = rng.uniform(-config.translate_frac, config.translate_frac) * w
        out = _affine(out, theta, scale, (ty, tx))

    if config.intensity_p > 0 and rng.uniform() < config.intensity_p:
        gamma = rng.uniform(*config.gamma_range)
        out = np.clip(out, 0.0, 1.0) ** gamma

    if config.noise_p > 0 and rng.uniform() < config.noise_p:
        std = rng.uniform(0.0, config.noise_std_max)
        out = out + rng.normal(0.0, std, size=out.shape)

    if config.channel_dropout_p > 0 and out.shape[0] > 1:
        if rng.uniform() < config.channel_dropout_p:
            channel = rng.integers(out.shape[0])
            out = out.copy()
            out[channel] = 0.0

    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _affine(image: np.ndarray, theta: float, scale: float, translate: tuple) -> np.ndarray:
    """Rotate/scale about the image center, then translate (bilinear)."""
    h, w = image.shape[-2:]
    ca, sa = math.cos(theta), math.sin(theta)
    # output -> input mapping: inverse of (rotate by theta, scale, shift)
    inv = np.array([[ca, sa], [-sa, ca]], dtype=np.float64) / scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ (center + np.asarray(translate))
    out = np.empty_like(image)
    for c in range(image.shape[0]):
        out[c] = affine_transform(image[c], inv, offset=offset, order=1, mode="constant", cval=0.0)
    return out


# ---------------------------------------------------------------------------
# Mixing real and synthetic manifests

@dataclass
class MixSpec:
    """Per-class counts drawn from a real and a synthetic manifest."""

    n_real: int
    n_synthetic: int
    real_manifest: DatasetManifest | None = None
    synthetic_manifest: DatasetManifest | None = None
    real_split: str | None = "train"

    def __post_init__(self):
        if self.n_real < 0 or self.n_synthetic < 0:
            raise ValueError("mix counts must be >= 0")
        if self.n_real == 0 and self.n_synthetic == 0:
            raise ValueError("mix cannot be empty: need real or synthetic cases")


def build_mix(spec: MixSpec, seed: int) -> DatasetManifest:
    """Balanced concatenation of seeded per-class samples; synthetic records
    are flagged with ``synthetic: true``."""
    rng = np.random.default_rng(seed)
    records: list[SliceRecord] = []
    labels = set()
    for manifest, count, split, synthetic in (
        (spec.real_manifest, spec.n_real, spec.real_split, False),
        (spec.synthetic_manifest, spec.n_synthetic, None, True),
    ):
        if count == 0:
            continue
        if manifest is None:
            raise ValueError("mix requests cases from a manifest that was not provided")
        per_label = {}
        for r in manifest.subset(split=split):
            per_label.setdefault(r.label, []).append(r)
        labels.update(per_label)
        for label in sorted(per_label):
            pool = per_label[label]
            if len(pool) < count:
                raise ValueError(
                    f"insufficient {'synthetic' if synthetic else 'real'} cases for "
                    f"label {label!r}: have {len(pool)}, need {count}"
                )
            chosen = rng.permutation(len(pool))[:count]
            for k in chosen:
                r = pool[k]
                extra = dict(r.extra)
                extra["synthetic"] = synthetic
                records.append(
                    SliceRecord(
                        id=r.id,
                        path=str(manifest.resolve_path(r)),
                        label=r.label,
                        split="train",
                        dataset=r.dataset,
                        config_hash=r.config_hash,
                        extra=extra,
                    )
                )
    return DatasetManifest(records=records, dataset="mix", config_hash="", root=None)


# ---------------------------------------------------------------------------
# Training

@dataclass
class ClassifierConfig:
    learning_rate: float = 1e-4
    total_batches: int = 6_250
    batch_size: int = 32
    eval_every: int = 250
    seed: int = 0
    backbone: str = "toy-cnn"
    backbone_width: int = 16
    channels: int = 1
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        for name in ("learning_rate", "total_batches", "batch_size", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def config_hash(self) -> str:
        return stable_hash(asdict(self))


@dataclass
class TrainReport:
    """Validation AUC curve, best checkpoint, and the single test AUC."""

    val_curve: list
    best_batch: int
    best_val_auc: float
    test_auc: float
    seed: int
    config_hash: str
    n_train: int
    n_val: int
    n_test: int

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


class ToyCNN(nn.Module):
    """Small strided conv net producing one logit."""

    def __init__(self, channels: int = 1, width: int = 16):
        super().__init__()
        w = width
        self.features = nn.Sequential(
            nn.Conv2d(channels, w, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(2 * w, 1)

    def forward(self, x):
        h = self.features(x).flatten(1)
        return self.head(h).squeeze(-1)


def build_backbone(config: ClassifierConfig) -> nn.Module:
    if config.backbone == "toy-cnn":
        return ToyCNN(channels=config.channels, width=config.backbone_width)
    if config.backbone == "resnet18":
        # optional adapter; requires torchvision (and external weights for
        # pretrained use), so it is imported lazily
        from torchvision.models import resnet18

        net = resnet18(num_classes=1)
        if config.channels != 3:
            net.conv1 = nn.Conv2d(config.channels, 64, 7, stride=2, padding=3, bias=False)
        return net
    raise ValueError(f"unknown backbone {config.backbone!r}")


def _load_split(manifest: DatasetManifest, split: str | None) -> tuple[np.ndarray, np.ndarray, list[str]]:
    records = manifest.subset(split=split) if split else manifest.records
    if not records:
        raise ValueError(f"no records for split {split!r}")
    images = np.stack([load_image(manifest.resolve_path(r)) for r in records])
    labels = np.asarray([1 if r.label == POSITIVE_LABEL else 0 for r in records])
    return images, labels, [r.id for r in records]


def _scores(model: nn.Module, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            batch = torch.from_numpy(images[i : i + batch_size] * 2.0 - 1.0)
            outs.append(model(batch).numpy())
    return np.concatenate(outs)


def evaluate_auc(model: nn.Module, images: np.ndarray, labels: np.ndarray) -> float:
    scores = _scores(model, images)
    return auc(list(zip(scores.tolist(), labels.tolist())))


def train_classifier(
    mix_manifest: DatasetManifest,
    config: ClassifierConfig,
    val_manifest: DatasetManifest,
    test_manifest: DatasetManifest,
    val_split: str | None = "val",
    test_split: str | None = "test",
    report_path: str | Path | None = None,
    return_model: bool = False,
):
    """Train on the mix, select the best validation checkpoint, test once.

    Returns the :class:`TrainReport`, or ``(report, model)`` with the model
    restored to the best checkpoint when ``return_model`` is set.
    """
    train_images, train_labels, train_ids = _load_split(mix_manifest, None)
    val_images, val_labels, val_ids = _load_split(val_manifest, val_split)
    test_images, test_labels, test_ids = _load_split(test_manifest, test_split)

    leak = set(train_ids) & (set(val_ids) | set(test_ids))
    if leak:
        raise SplitLeakError(
            f"{len(leak)} case ids shared between train and val/test, e.g. {sorted(leak)[:3]}"
        )

    g = torch_generator(config.seed)
    model = build_backbone(config)
    with torch.no_grad():
        for p in model.parameters():
            if p.dim() > 1:
                nn.init.kaiming_uniform_(p, a=5**0.5, generator=g)
            else:
                p.zero_()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()

    n = len(train_images)
    best = {"auc": -1.0, "batch": 0, "state": None}
    val_curve = []
    for step in range(config.total_batches):
        idx = torch.randint(n, (config.batch_size,), generator=g).numpy()
        batch = np.stack(
            [
                augment(train_images[i], derive_seed(config.seed, "augment", step, int(i)), config.augment)
                for i in idx
            ]
        )
        x = torch.from_numpy(batch * 2.0 - 1.0)
        y = torch.from_numpy(train_labels[idx].astype(np.float32))
        model.train()
        logits = model(x)
        loss = loss_fn(logits, y)
        if not torch.isfinite(loss):
            raise TrainingAbortedError("non-finite classifier loss", step=step)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        if (step + 1) % config.eval_every == 0 or (step + 1) == config.total_batches:
            val_auc = evaluate_auc(model, val_images, val_labels)
            val_curve.append((step + 1, val_auc))
            if val_auc > best["auc"]:
                best = {
                    "auc": val_auc,
                    "batch": step + 1,
                    "state": {k: v.detach().clone() for k, v in model.state_dict().items()},
                }

    model.load_state_dict(best["state"])
    test_auc = evaluate_auc(model, test_images, test_labels)
    report = TrainReport(
        val_curve=val_curve,
        best_batch=best["batch"],
        best_val_auc=best["auc"],
        test_auc=test_auc,
        seed=config.seed,
        config_hash=config.config_hash(),
        n_train=n,
        n_val=len(val_images),
        n_test=len(test_images),
    )
    if report_path is not None:
        report.save(report_path)
    if return_model:
        model.eval()
        return report, model
    return report
