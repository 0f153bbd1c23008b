"""Noise schedules and single-canvas DDPM equations.

Tensors are numpy float arrays shaped ``(..., H, W, C)``; every operation here
is elementwise, so a leading batch axis is carried through unchanged.

Randomness always comes from an explicit :class:`numpy.random.Generator`
built by :func:`make_rng` (PCG64 bit generator, numpy's ziggurat
``standard_normal``). The stream for a given seed is stable across runs and
platforms for a fixed numpy major version.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ShapeError, StepError
from .memory import track


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used for every random draw in tessera."""
    if not 0 <= int(seed) < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Variance schedule with derived tables, indexed ``t - 1`` for ``t = 1..T``."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray

    @classmethod
    def from_betas(cls, betas) -> NoiseSchedule:
        beta = np.array(betas, dtype=np.float64).reshape(-1)
        if beta.size < 1:
            raise ConfigError("schedule needs at least one step")
        if not np.all((beta > 0) & (beta < 1)):
            raise ConfigError("every beta_t must lie in (0, 1)")
        alpha = 1.0 - beta
        # sequential running product: alpha_bar[t] == alpha_bar[t-1] * alpha[t] bit for bit
        alpha_bar = np.cumprod(alpha)
        prev = np.concatenate(([1.0], alpha_bar[:-1]))
        beta_tilde = (1.0 - prev) / (1.0 - alpha_bar) * beta
        return cls(_readonly(beta), _readonly(alpha), _readonly(alpha_bar), _readonly(beta_tilde))

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def check_step(self, t, allow_zero: bool = False) -> int:
        lo = 0 if allow_zero else 1
        if int(t) != t or not lo <= t <= self.T:
            raise StepError(f"step {t} outside [{lo}, {self.T}]")
        return int(t)

    def abar(self, t: int) -> float:
        """``alpha_bar`` at step ``t`` in ``0..T`` with ``alpha_bar(0) == 1``."""
        t = self.check_step(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def __repr__(self):
        return f"NoiseSchedule(T={self.T}, beta=[{self.beta[0]:g} .. {self.beta[-1]:g}])"


def make_linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


def _same_shape(*arrays) -> None:
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeError(f"shape mismatch: {shape} vs {np.shape(a)}")


def forward_jump(x0, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Sample ``q(x_t | x_0)`` through the reparametrisation with given noise."""
    _same_shape(x0, eps)
    ab = sched.abar(sched.check_step(t))
    return track(np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps)


def forward_step(x_prev, t: int, rng: np.random.Generator, sched: NoiseSchedule) -> np.ndarray:
    """One Markov noising step ``x_{t-1} -> x_t``."""
    t = sched.check_step(t)
    b = sched.beta[t - 1]
    z = track(rng.standard_normal(np.shape(x_prev)))
    return track(np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * z)


def posterior_coefficients(t: int, sched: NoiseSchedule) -> tuple[float, float, float]:
    """``(coef_x0, coef_xt, variance)`` of ``q(x_{t-1} | x_t, x_0)``."""
    t = sched.check_step(t)
    ab, ab_prev = sched.abar(t), sched.abar(t - 1)
    b, a = float(sched.beta[t - 1]), float(sched.alpha[t - 1])
    c0 = np.sqrt(ab_prev) * b / (1.0 - ab)
    ct = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    return float(c0), float(ct), float(sched.beta_tilde[t - 1])


def posterior_params(x0, xt, t: int, sched: NoiseSchedule) -> tuple[np.ndarray, float]:
    _same_shape(x0, xt)
    c0, ct, var = posterior_coefficients(t, sched)
    return track(c0 * x0 + ct * xt), var


def posterior_mean_from_eps(xt, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Posterior mean with ``x_0`` replaced by its estimate from predicted noise."""
    _same_shape(xt, eps_hat)
    t = sched.check_step(t)
    a = float(sched.alpha[t - 1])
    ab = sched.abar(t)
    return track((xt - ((1.0 - a) / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(a))


def ddpm_step(xt, eps_hat, t: int, rng: np.random.Generator, sched: NoiseSchedule) -> np.ndarray:
    """Reverse step ``x_t -> x_{t-1}``: posterior mean plus ``sqrt(beta_tilde_t)`` noise.

    The final step (``t == 1``) returns the mean and draws nothing from ``rng``.
    """
    mean = posterior_mean_from_eps(xt, eps_hat, t, sched)
    if t == 1:
        return mean
    z = track(rng.standard_normal(mean.shape))
    mean += np.sqrt(sched.beta_tilde[t - 1]) * z
    return mean


# A scheduler maps (x_t, eps_hat, t, rng, sched) to x_{t-1}; only DDPM ships.
Scheduler = Callable[[np.ndarray, np.ndarray, int, np.random.Generator, NoiseSchedule], np.ndarray]


def cfg_combine(eps_uncond, eps_cond, s: float) -> np.ndarray:
    """Classifier-free guidance: move from the unconditioned prediction toward the conditioned one.

    ``s == 0`` and ``s == 1`` return exact copies of the respective endpoint.
    """
    _same_shape(eps_uncond, eps_cond)
    if s == 0:
        return track(np.array(eps_uncond, dtype=np.float64))
    if s == 1:
        return track(np.array(eps_cond, dtype=np.float64))
    return track(eps_uncond + s * (eps_cond - eps_uncond))


def sample_ddpm(
    predict: Callable[[np.ndarray, int], np.ndarray],
    shape,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    trajectory: list | None = None,
) -> np.ndarray:
    """Plain single-model DDPM loop from ``x_T ~ N(0, I)`` down to ``x_0``."""
    x = track(rng.standard_normal(tuple(shape)))
    if trajectory is not None:
        trajectory.append(x.copy())
    for t in range(sched.T, 0, -1):
        x = ddpm_step(x, predict(x, t), t, rng, sched)
        if trajectory is not None:
            trajectory.append(x.copy())
    return x


def simple_loss_terms(predictor, target_sampler, sched: NoiseSchedule, n_samples: int, rng) -> np.ndarray:
    """Per-sample squared noise-prediction errors ``||eps - eps_theta(x_t, t)||^2``.

    Draw order per sample is fixed (``x0``, then ``t``, then ``eps``) so two
    predictors evaluated from the same seed see identical inputs.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    out = np.empty(n_samples)
    for i in range(n_samples):
        x0 = np.asarray(target_sampler(rng), dtype=np.float64)
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(x0.shape)
        xt = forward_jump(x0, eps, t, sched)
        out[i] = np.sum((eps - predictor(xt, t)) ** 2)
    return out


def simple_loss(predictor, target_sampler, sched: NoiseSchedule, n_samples: int, rng) -> float:
    """Monte-Carlo estimate of the simplified noise-prediction objective."""
    return float(np.mean(simple_loss_terms(predictor, target_sampler, sched, n_samples, rng)))
