"""Independent judges for generated toy images.

Two kinds of oracle: a pure image-processing lesion score (difference of
Gaussians bright-blob energy, no learned parameters) and a held-out trained
classifier.  Both judge samples without touching the generative path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .classifier import ClassifierConfig, MixSpec, _scores, build_mix, train_classifier
from .datasets.manifest import DatasetManifest

DOG_NARROW = 1.5
DOG_WIDE = 4.0
TOP_K = 30


def lesion_heatmap(image: np.ndarray) -> np.ndarray:
    """Positive difference-of-Gaussians response: bright compact structures."""
    arr = np.asarray(image, dtype=np.float32)
    gray = arr.mean(axis=0) if arr.ndim == 3 else arr
    dog = gaussian_filter(gray, DOG_NARROW) - gaussian_filter(gray, DOG_WIDE)
    return np.clip(dog, 0.0, None)


def lesion_score(image: np.ndarray, top_k: int = TOP_K) -> float:
    """Scalar lesion intensity: mean of the strongest heatmap responses."""
    heat = lesion_heatmap(image).ravel()
    k = min(top_k, heat.size)
    return float(np.sort(heat)[-k:].mean())


@dataclass
class OracleClassifier:
    """Trained judge with hard decisions at logit zero."""

    model: torch.nn.Module
    test_auc: float

    def scores(self, images: np.ndarray) -> np.ndarray:
        return _scores(self.model, np.asarray(images, dtype=np.float32))

    def classify(self, images: np.ndarray) -> np.ndarray:
        """1 = diseased, 0 = healthy."""
        return (self.scores(images) > 0.0).astype(int)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        pred = self.classify(images)
        return float((pred == np.asarray(labels)).mean())


def train_oracle(
    manifest: DatasetManifest,
    config: ClassifierConfig | None = None,
) -> OracleClassifier:
    """Train the held-out judge on a real toy corpus (train/val/test splits)."""
    if config is None:
        config = ClassifierConfig(
            learning_rate=3e-4, total_batches=800, batch_size=32, eval_every=100, seed=77
        )
    n_train = min(
        len(manifest.subset(split="train", label=label))
        for label in manifest.class_counts()
    )
    mix = build_mix(
        MixSpec(n_real=n_train, n_synthetic=0, real_manifest=manifest, real_split="train"),
        seed=config.seed,
    )
    report, model = train_classifier(mix, config, manifest, manifest, return_model=True)
    return OracleClassifier(model=model, test_auc=report.test_auc)
