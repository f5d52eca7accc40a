import numpy as np
import pytest
from hypothesis import given, strategies as st

from tidiff.schedule import build_schedule


def test_degenerate_single_step():
    s = build_schedule(1, sigma_min=0.02, sigma_max=10.0)
    assert s.sigmas.tolist() == [10.0, 0.0]


def test_two_step_linear_rho():
    s = build_schedule(2, sigma_min=0.1, sigma_max=10.0, rho=1.0)
    assert s.sigmas.tolist() == [10.0, 0.1, 0.0]


def test_default_ladder_shape_and_endpoints():
    s = build_schedule(100)
    assert len(s.sigmas) == 101
    assert s.sigmas[0] == 10.0
    assert s.sigmas[-2] == pytest.approx(0.02)
    assert s.sigmas[-1] == 0.0
    assert np.all(np.diff(s.sigmas) < 0)


def test_training_sigmas_excludes_zero():
    s = build_schedule(10)
    assert len(s.training_sigmas()) == 10
    assert (s.training_sigmas() > 0).all()


@given(
    steps=st.integers(min_value=1, max_value=400),
    sigma_min=st.floats(min_value=1e-3, max_value=0.9),
    span=st.floats(min_value=1.1, max_value=200.0),
    rho=st.floats(min_value=0.3, max_value=12.0),
)
def test_ladder_invariants_hold_everywhere(steps, sigma_min, span, rho):
    s = build_schedule(steps, sigma_min=sigma_min, sigma_max=sigma_min * span, rho=rho)
    sig = s.sigmas
    assert sig[0] == s.sigma_max
    assert sig[-1] == 0.0
    assert np.all(np.diff(sig) < 0)
    assert len(sig) == steps + 1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"steps": 0},
        {"steps": -3},
        {"steps": 10, "sigma_min": 2.0, "sigma_max": 1.0},
        {"steps": 10, "sigma_min": 0.0},
        {"steps": 10, "sigma_min": -1.0},
        {"steps": 10, "rho": 0.0},
        {"steps": 10, "rho": -7.0},
    ],
)
def test_invalid_parameters_rejected(kwargs):
    with pytest.raises(ValueError):
        build_schedule(**kwargs)
