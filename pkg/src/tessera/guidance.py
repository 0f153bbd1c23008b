"""Guide-image conditioning by deterministic noisy overrides.

At each noise level ``t`` a guide still in effect replaces its placement on the
canvas with ``sqrt(abar_t) * guide + (1 - abar_t)**p * x_T[placement]``, reusing
the initial noise ``x_T`` so that successive overrides share one noising
pattern. ``p = 0.5`` (default) matches the forward-process marginal; ``p = 1``
is available for comparison.

Noise levels follow the state being overridden: after the reverse step from
``t`` to ``t - 1`` the overrides are evaluated at level ``t - 1``, and the
initial ``x_T`` is evaluated at level ``T``. A guide of strength ``g`` is in
effect at levels ``t >= round((1 - g) * T)``; strength 1 therefore pins the
final ``x_0`` to the guide exactly (``abar_0 == 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffusion import NoiseSchedule
from .errors import ConfigError, ShapeError
from .memory import track
from .region import Region

NOISE_EXPONENTS = (0.5, 1.0)


@dataclass(frozen=True, eq=False)
class GuideSpec:
    image: np.ndarray
    placement: Region
    strength: float
    noise_exponent: float = 0.5

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 3 or img.shape[:2] != (self.placement.height, self.placement.width):
            raise ShapeError(
                f"guide image shape {img.shape} does not match placement "
                f"{self.placement.height}x{self.placement.width}"
            )
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigError(f"guide strength must be in [0, 1], got {self.strength}")
        if self.noise_exponent not in NOISE_EXPONENTS:
            raise ConfigError(f"noise_exponent must be one of {NOISE_EXPONENTS}, got {self.noise_exponent}")
        object.__setattr__(self, "image", img)


def override_threshold(g: float, T: int) -> int:
    """Lowest noise level at which a guide of strength ``g`` is still applied."""
    if not 0.0 <= g <= 1.0:
        raise ConfigError(f"guide strength must be in [0, 1], got {g}")
    return int(math.floor((1.0 - g) * T + 0.5))


def noisy_guide(x_g, t: int, xT_slice, sched: NoiseSchedule, noise_exponent: float = 0.5) -> np.ndarray:
    if np.shape(xT_slice)[-3:] != np.shape(x_g):
        raise ShapeError(f"guide shape {np.shape(x_g)} does not match noise slice {np.shape(xT_slice)}")
    ab = sched.abar(t)
    noise_coef = math.sqrt(1.0 - ab) if noise_exponent == 0.5 else (1.0 - ab) ** noise_exponent
    return track(math.sqrt(ab) * x_g + noise_coef * xT_slice)


def apply_guides(
    x: np.ndarray,
    t: int,
    guides: Sequence[GuideSpec],
    xT: np.ndarray,
    sched: NoiseSchedule,
    inplace: bool = False,
) -> np.ndarray:
    """Override guide placements of ``x`` (at noise level ``t``); later guides win on overlap."""
    if not guides:
        return x
    *_, height, width, _ = np.shape(x)
    for i, g in enumerate(guides):
        g.placement.check_within(height, width, what=f"guides[{i}]")
    if not inplace:
        x = track(x.copy())
    for g in guides:
        if t >= override_threshold(g.strength, sched.T):
            idx = g.placement.index
            x[idx] = noisy_guide(g.image, t, xT[idx], sched, g.noise_exponent)
    return x


def sample_with_guides(job, **kwargs) -> np.ndarray:
    """Region-mixed sampling with the job's guide overrides applied after every step."""
    from .mixer import sample

    return sample(job, **kwargs)
