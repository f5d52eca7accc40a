"""tidiff: concept-embedding inversion for diffusion models.

Train a multi-vector token embedding against a frozen denoiser, then use it
for guided sampling, weighted composition, interpolation, inpainting and
distribution-distance evaluation.  A small built-in denoiser and a synthetic
dataset make the whole pipeline runnable on one CPU.
"""

from .backbones import DenoiserBackbone, ToyDenoiser
from .composition import ComposedPrompt, format_prompt, interpolation_sweep, parse_prompt
from .conditioning import ConceptEmbedding, TextConditioner, ToyConditioner
from .evaluation import GaussianStats, ToyFeatureExtractor, compute_stats, fid, frechet_distance
from .guidance import GuidanceSpec, guided_noise_prediction
from .inpainting import InpaintMask, inpaint
from .inversion import (
    EmbeddingRegistry,
    TIConfig,
    init_embedding,
    load_embedding,
    save_embedding,
    ti_loss,
    train_embedding,
)
from .sampler import euler_ancestral_step, forward_diffuse, sample, sample_many
from .schedule import NoiseSchedule, build_schedule

__version__ = "0.1.0"

__all__ = [
    "ComposedPrompt",
    "ConceptEmbedding",
    "DenoiserBackbone",
    "EmbeddingRegistry",
    "GaussianStats",
    "GuidanceSpec",
    "InpaintMask",
    "NoiseSchedule",
    "TIConfig",
    "TextConditioner",
    "ToyConditioner",
    "ToyDenoiser",
    "ToyFeatureExtractor",
    "build_schedule",
    "compute_stats",
    "euler_ancestral_step",
    "fid",
    "format_prompt",
    "forward_diffuse",
    "frechet_distance",
    "guided_noise_prediction",
    "init_embedding",
    "inpaint",
    "interpolation_sweep",
    "load_embedding",
    "parse_prompt",
    "sample",
    "sample_many",
    "save_embedding",
    "ti_loss",
    "train_embedding",
]
