import sys
from pathlib import Path

import pytest
import torch
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def tiny_denoiser():
    from tidiff.backbones import ToyDenoiser

    torch.manual_seed(0)
    d = ToyDenoiser(channels=1, hidden=8, stem_width=4, cond_dim=8)
    d.freeze()
    return d


@pytest.fixture
def tiny_conditioner():
    from tidiff.conditioning import ToyConditioner

    c = ToyConditioner(dim=8)
    c.requires_grad_(False)
    return c
