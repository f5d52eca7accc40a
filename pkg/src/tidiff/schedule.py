"""Sigma ladders for the variance-exploding diffusion process.

The ladder is a strictly decreasing sequence of noise levels ending in an
exact zero, built with the rho-power spacing that the ancestral Euler
sampler expects.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SIGMA_MIN = 0.02
DEFAULT_SIGMA_MAX = 10.0
DEFAULT_RHO = 7.0


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone sigma ladder: ``steps + 1`` values, last entry exactly 0."""

    sigmas: np.ndarray
    sigma_min: float
    sigma_max: float
    rho: float

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        object.__setattr__(self, "sigmas", s)
        if s.ndim != 1 or len(s) < 2:
            raise ValueError("schedule needs at least two entries")
        if s[-1] != 0.0:
            raise ValueError("schedule must end at sigma == 0")
        if not np.all(np.diff(s) < 0):
            raise ValueError("sigmas must be strictly decreasing")
        if s[0] != self.sigma_max:
            raise ValueError("first sigma must equal sigma_max")

    @property
    def steps(self) -> int:
        return len(self.sigmas) - 1

    def training_sigmas(self) -> np.ndarray:
        """The non-zero ladder entries (what training draws from)."""
        return self.sigmas[:-1]


def build_schedule(
    steps: int,
    sigma_min: float = DEFAULT_SIGMA_MIN,
    sigma_max: float = DEFAULT_SIGMA_MAX,
    rho: float = DEFAULT_RHO,
) -> NoiseSchedule:
    """Build a rho-spaced sigma ladder with a trailing zero.

    For ``i < steps``::

        sigmas[i] = (sigma_max^(1/rho) + i/(steps-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho

    and ``sigmas[steps] = 0``.  ``steps == 1`` degenerates to
    ``[sigma_max, 0]``.
    """
    if not isinstance(steps, (int, np.integer)) or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if not (0 < sigma_min < sigma_max):
        raise ValueError(
            f"need 0 < sigma_min < sigma_max, got sigma_min={sigma_min}, sigma_max={sigma_max}"
        )
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")

    if steps == 1:
        ladder = np.array([sigma_max], dtype=np.float64)
    else:
        ramp = np.arange(steps, dtype=np.float64) / (steps - 1)
        max_inv = sigma_max ** (1.0 / rho)
        min_inv = sigma_min ** (1.0 / rho)
        ladder = (max_inv + ramp * (min_inv - max_inv)) ** rho
        ladder[0] = sigma_max
        ladder[-1] = sigma_min
    sigmas = np.append(ladder, 0.0)
    return NoiseSchedule(sigmas=sigmas, sigma_min=sigma_min, sigma_max=sigma_max, rho=rho)
