"""Noise predictors.

A predictor is any callable ``predictor(x, t, y) -> eps_hat`` returning an
array shaped like ``x``; ``y`` is a prompt id or :data:`UNCOND`. Predictors
may also expose ``predict_batch(items)`` for a vectorised path, which must
agree bit for bit with calling them one item at a time.

:class:`AnalyticGaussianPredictor` is the exact minimum-MSE noise predictor
for a target distribution that is an isotropic Gaussian around a mean image
per prompt. It stands in for a trained denoising network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence, Union

import numpy as np

from .diffusion import NoiseSchedule
from .errors import ConfigError, TesseraError
from .memory import track

UNCOND = None
"""Prompt token for the unconditioned prediction."""

PromptId = Optional[str]


@dataclass(frozen=True)
class Flat:
    value: float

    def _values(self):
        return (self.value,)

    def render(self, h: int, w: int, c: int) -> np.ndarray:
        return np.full((h, w, c), float(self.value))


@dataclass(frozen=True)
class HorizontalGradient:
    """Linear ramp across columns, sampled at pixel centres."""

    start: float
    end: float

    def _values(self):
        return (self.start, self.end)

    def render(self, h: int, w: int, c: int) -> np.ndarray:
        pos = (np.arange(w) + 0.5) / w
        row = self.start + (self.end - self.start) * pos
        return np.broadcast_to(row[None, :, None], (h, w, c)).copy()


@dataclass(frozen=True)
class Checkerboard:
    low: float
    high: float
    size: int = 1

    def _values(self):
        return (self.low, self.high)

    def render(self, h: int, w: int, c: int) -> np.ndarray:
        cells = (np.arange(h)[:, None] // self.size + np.arange(w)[None, :] // self.size) % 2
        img = np.where(cells == 0, float(self.high), float(self.low))
        return np.broadcast_to(img[:, :, None], (h, w, c)).copy()


Pattern = Union[Flat, HorizontalGradient, Checkerboard]


def _check_pattern(name, pattern) -> None:
    for v in pattern._values():
        if not -1.0 <= v <= 1.0:
            raise ConfigError(f"mean pattern for prompt {name!r} has value {v} outside [-1, 1]")
    if isinstance(pattern, Checkerboard) and pattern.size < 1:
        raise ConfigError(f"checkerboard size for prompt {name!r} must be >= 1")


@dataclass(frozen=True)
class AnalyticTarget:
    """Per-prompt Gaussian image distributions ``N(mean_y, sigma0^2 I)``."""

    means: Mapping[str, Pattern]
    sigma0: float = 0.5
    uncond_mean: Pattern = field(default_factory=lambda: Flat(0.0))
    uncond_sigma0: float = 1.0

    def __post_init__(self):
        for name, pattern in self.means.items():
            if not name:
                raise ConfigError("prompt ids must be non-empty strings")
            _check_pattern(name, pattern)
        _check_pattern(UNCOND, self.uncond_mean)
        for s in (self.sigma0, self.uncond_sigma0):
            if not (np.isfinite(s) and s >= 0):
                raise ConfigError(f"sigma0 must be finite and >= 0, got {s}")

    def resolve(self, y: PromptId) -> tuple[Pattern, float]:
        if y is UNCOND:
            return self.uncond_mean, self.uncond_sigma0
        try:
            return self.means[y], self.sigma0
        except KeyError:
            raise ConfigError(f"unknown prompt id {y!r}") from None

    def mean_image(self, y: PromptId, shape) -> np.ndarray:
        *_, h, w, c = shape
        return self.resolve(y)[0].render(h, w, c)

    def sample(self, y: PromptId, shape, rng: np.random.Generator) -> np.ndarray:
        """Draw ``x0`` from the target (used as a data source for loss estimates)."""
        pattern, s0 = self.resolve(y)
        *_, h, w, c = shape
        return pattern.render(h, w, c) + s0 * rng.standard_normal(tuple(shape))


def _abar(t: int, sched: NoiseSchedule) -> float:
    return sched.abar(sched.check_step(t))


def analytic_posterior_x0(xt, t: int, target: AnalyticTarget, y: PromptId, sched: NoiseSchedule) -> np.ndarray:
    """``E[x0 | x_t]`` under the Gaussian target."""
    pattern, s0 = target.resolve(y)
    ab = _abar(t, sched)
    mu = target.mean_image(y, np.shape(xt))
    var0 = s0 * s0
    return track((np.sqrt(ab) * var0 * xt + (1.0 - ab) * mu) / (ab * var0 + (1.0 - ab)))


def _eps_coefficients(t: int, s0: float, sched: NoiseSchedule) -> tuple[float, float]:
    ab = _abar(t, sched)
    return float(np.sqrt(1.0 - ab) / (ab * s0 * s0 + (1.0 - ab))), float(np.sqrt(ab))


def analytic_eps(xt, t: int, target: AnalyticTarget, y: PromptId, sched: NoiseSchedule) -> np.ndarray:
    """Minimum-MSE noise prediction ``E[eps | x_t]`` under the Gaussian target."""
    pattern, s0 = target.resolve(y)
    k, root_ab = _eps_coefficients(t, s0, sched)
    mu = target.mean_image(y, np.shape(xt))
    return track(k * (xt - root_ab * mu))


class NoisePredictor(Protocol):
    def __call__(self, x: np.ndarray, t: int, y: PromptId) -> np.ndarray: ...


class AnalyticGaussianPredictor:
    """Exact noise predictor for an :class:`AnalyticTarget` under a fixed schedule."""

    def __init__(self, target: AnalyticTarget, sched: NoiseSchedule):
        self.target = target
        self.sched = sched

    def __call__(self, x, t, y=UNCOND):
        return analytic_eps(x, t, self.target, y, self.sched)

    def predict_batch(self, items: Sequence[tuple]) -> list[np.ndarray]:
        # Stack same-shaped items and evaluate the elementwise formula once per group;
        # per-item scalars broadcast, so every element sees the same float ops as a single call.
        groups: dict[tuple, list[int]] = {}
        for i, (x, t, y) in enumerate(items):
            groups.setdefault(np.shape(x), []).append(i)
        out: list = [None] * len(items)
        for shape, idx in groups.items():
            ks, roots, mus = [], [], []
            for i in idx:
                x, t, y = items[i]
                try:
                    _, s0 = self.target.resolve(y)
                    k, r = _eps_coefficients(t, s0, self.sched)
                except TesseraError as exc:
                    raise PredictionError(i, exc) from exc
                ks.append(k)
                roots.append(r)
                mus.append(np.broadcast_to(self.target.mean_image(y, shape), shape))
            bshape = (len(idx),) + (1,) * len(shape)
            xs = track(np.stack([items[i][0] for i in idx]))
            mu = track(np.stack(mus))
            eps = track(np.reshape(ks, bshape) * (xs - np.reshape(roots, bshape) * mu))
            for j, i in enumerate(idx):
                out[i] = eps[j]
        return out

    def __repr__(self):
        return f"AnalyticGaussianPredictor(prompts={sorted(self.target.means)}, sigma0={self.target.sigma0})"


class PredictionError(TesseraError):
    """A predictor failed on one item of a batch."""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        self.cause = cause
        super().__init__(f"batch item {index}: {cause}")


def batch_predict(predictor, inputs: Sequence[tuple]) -> list[np.ndarray]:
    """Evaluate ``predictor`` on ``(x, t, y)`` items, preserving input order."""
    if not inputs:
        raise ConfigError("batch_predict needs at least one input")
    batched = getattr(predictor, "predict_batch", None)
    if batched is not None:
        return batched(inputs)
    out = []
    for i, (x, t, y) in enumerate(inputs):
        try:
            out.append(predictor(x, t, y))
        except TesseraError as exc:
            raise PredictionError(i, exc) from exc
    return out
