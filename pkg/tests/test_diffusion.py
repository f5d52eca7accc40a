import math

import numpy as np
import pytest
import torch

from tidiff.errors import NumericError, SamplingError, ShapeMismatchError
from tidiff.guidance import GuidanceSpec, guided_noise_prediction, single_concept
from tidiff.sampler import (
    ancestral_sigmas,
    euler_ancestral_step,
    forward_diffuse,
    sample,
    sample_many,
)
from tidiff.schedule import build_schedule
from tidiff.utils import torch_generator

from helpers import FuncDenoiser, StubDenoiser


# ---------------------------------------------------------------------------
# forward diffusion

def test_forward_zero_noise_returns_input():
    x0 = torch.randn(1, 4, 4)
    assert torch.equal(forward_diffuse(x0, 3.0, torch.zeros_like(x0)), x0)


def test_forward_zero_sigma_returns_input():
    x0 = torch.randn(1, 4, 4)
    assert torch.equal(forward_diffuse(x0, 0.0, torch.randn(1, 4, 4)), x0)


def test_forward_linearity():
    out = forward_diffuse(torch.zeros(1, 3, 3), 2.0, torch.ones(1, 3, 3))
    assert torch.equal(out, torch.full((1, 3, 3), 2.0))


def test_forward_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        forward_diffuse(torch.zeros(1, 4, 4), 1.0, torch.zeros(1, 4, 5))


# ---------------------------------------------------------------------------
# guidance

def _ctx(value, dim=3):
    return torch.full((dim,), float(value))


def test_cfg_collapse_exact():
    e1 = torch.randn(1, 2, 2)
    stub = StubDenoiser(unconditional=torch.zeros(1, 2, 2), pairs=[(_ctx(1), e1)])
    spec = GuidanceSpec(terms=((_ctx(1), 1.0),), cfg_scale=1.0)
    out = guided_noise_prediction(stub, torch.zeros(1, 2, 2), 1.0, spec)
    assert torch.equal(out, e1)


def test_cfg_zero_returns_unconditional():
    e_u = torch.randn(1, 2, 2)
    stub = StubDenoiser(unconditional=e_u, pairs=[(_ctx(1), torch.randn(1, 2, 2))])
    spec = GuidanceSpec(terms=((_ctx(1), 1.0),), cfg_scale=0.0)
    out = guided_noise_prediction(stub, torch.zeros(1, 2, 2), 1.0, spec)
    assert torch.equal(out, e_u)


def test_two_term_combination_matches_hand_computation():
    e_u = torch.tensor([[[0.5, -1.0], [2.0, 0.0]]])
    e_1 = torch.tensor([[[1.0, 1.0], [-1.0, 3.0]]])
    e_2 = torch.tensor([[[-2.0, 0.5], [4.0, 1.5]]])
    stub = StubDenoiser(unconditional=e_u, pairs=[(_ctx(1), e_1), (_ctx(2), e_2)])
    spec = GuidanceSpec(terms=((_ctx(1), 0.25), (_ctx(2), 0.75)), cfg_scale=2.0)
    out = guided_noise_prediction(stub, torch.zeros(1, 2, 2), 1.0, spec)
    expected = (
        e_u.double() + 2.0 * (0.25 * (e_1.double() - e_u.double()) + 0.75 * (e_2.double() - e_u.double()))
    )
    assert torch.allclose(out.double(), expected, atol=1e-6, rtol=0)


@pytest.mark.parametrize("k", [0.5, 1.0, -2.0, 3.7])
def test_combination_linear_in_each_prediction(k):
    base = torch.randn(1, 3, 3)
    stub = StubDenoiser(unconditional=torch.zeros(1, 3, 3), pairs=[(_ctx(1), k * base)])
    spec = GuidanceSpec(terms=((_ctx(1), 0.6),), cfg_scale=2.5)
    out = guided_noise_prediction(stub, torch.zeros(1, 3, 3), 1.0, spec)
    assert torch.allclose(out, 2.5 * 0.6 * k * base, atol=1e-6, rtol=0)


def test_zero_weight_terms_never_reach_denoiser():
    calls = []

    def fn(noisy, sigma, context):
        calls.append(context)
        return torch.zeros_like(noisy)

    spec = GuidanceSpec(terms=((_ctx(1), 1.0), (_ctx(2), 0.0)), cfg_scale=1.0)
    guided_noise_prediction(FuncDenoiser(fn), torch.zeros(1, 2, 2), 1.0, spec)
    assert len(calls) == 1 and torch.equal(calls[0], _ctx(1))


def test_empty_terms_rejected():
    with pytest.raises(ValueError):
        GuidanceSpec(terms=(), cfg_scale=1.0)


def test_nonfinite_weight_rejected():
    with pytest.raises(ValueError):
        GuidanceSpec(terms=((_ctx(1), float("nan")),), cfg_scale=1.0)


def test_nan_prediction_raises_numeric_error():
    nan_stub = FuncDenoiser(lambda x, s, c: torch.full_like(x, float("nan")))
    spec = single_concept(_ctx(1), cfg_scale=2.0)
    with pytest.raises(NumericError):
        guided_noise_prediction(nan_stub, torch.zeros(1, 2, 2), 1.0, spec)


# ---------------------------------------------------------------------------
# ancestral Euler step

def test_ancestral_sigma_values():
    sigma_down, sigma_up = ancestral_sigmas(1.0, 0.5)
    assert sigma_up == pytest.approx(math.sqrt(0.25 * 0.75), abs=1e-12)
    assert sigma_down == pytest.approx(0.25, abs=1e-12)


def test_final_step_is_noise_free():
    x = torch.randn(1, 4, 4)
    pred = torch.randn(1, 4, 4)
    out_a = euler_ancestral_step(x, 2.0, 0.0, pred, torch.randn(1, 4, 4))
    out_b = euler_ancestral_step(x, 2.0, 0.0, pred, torch.randn(1, 4, 4))
    assert torch.equal(out_a, out_b)
    assert torch.equal(out_a, x - 2.0 * pred)


def test_zero_prediction_zero_noise_leaves_x():
    x = torch.randn(1, 4, 4)
    out = euler_ancestral_step(x, 1.0, 0.4, torch.zeros_like(x), torch.zeros_like(x))
    assert torch.equal(out, x)


def test_sigma_ordering_violation():
    x = torch.zeros(1, 2, 2)
    with pytest.raises(ValueError):
        euler_ancestral_step(x, 0.5, 0.5, x, x)
    with pytest.raises(ValueError):
        euler_ancestral_step(x, 0.5, 1.0, x, x)


# ---------------------------------------------------------------------------
# full sampling loop

def test_sampling_is_deterministic(tiny_denoiser, tiny_conditioner):
    schedule = build_schedule(8)
    spec = single_concept(tiny_conditioner.encode(["object"]), cfg_scale=2.0)
    a = sample(tiny_denoiser, schedule, spec, seed=123, shape=(1, 16, 16))
    b = sample(tiny_denoiser, schedule, spec, seed=123, shape=(1, 16, 16))
    c = sample(tiny_denoiser, schedule, spec, seed=124, shape=(1, 16, 16))
    assert torch.equal(a, b)
    assert not torch.equal(a, c)
    assert torch.isfinite(a).all()


def test_single_step_sampling_is_pure_denoise():
    e = torch.randn(1, 8, 8)
    schedule = build_schedule(1, sigma_max=10.0)
    spec = single_concept(_ctx(1.0, 4), cfg_scale=1.0)
    out = sample(FuncDenoiser(lambda x, s, c: e), schedule, spec, seed=9, shape=(1, 8, 8))
    g = torch_generator(9)
    x_init = 10.0 * torch.randn(1, 8, 8, generator=g)
    assert torch.equal(out, x_init - 10.0 * e)


def test_batched_sampling_matches_single(tiny_denoiser, tiny_conditioner):
    schedule = build_schedule(6)
    spec = single_concept(tiny_conditioner.encode(["object"]), cfg_scale=2.0)
    seeds = [3, 11, 42]
    batched = sample_many(tiny_denoiser, schedule, spec, seeds, (1, 16, 16))
    for k, seed in enumerate(seeds):
        single = sample(tiny_denoiser, schedule, spec, seed, (1, 16, 16))
        torch.testing.assert_close(batched[k], single, atol=1e-6, rtol=0)


def test_numeric_failure_carries_step_index():
    calls = {"n": 0}

    def fn(noisy, sigma, context):
        calls["n"] += 1
        if calls["n"] > 3:
            return torch.full_like(noisy, float("nan"))
        return torch.zeros_like(noisy)

    schedule = build_schedule(10)
    spec = single_concept(_ctx(1.0, 4), cfg_scale=1.0)
    with pytest.raises(SamplingError) as err:
        sample(FuncDenoiser(fn), schedule, spec, seed=0, shape=(1, 4, 4))
    assert err.value.step == 3
    assert "step 3" in str(err.value)
