"""Region-mixed noise prediction and the tiled sampling loop.

Each region runs a guided noise prediction on its own slice of the canvas.
The per-region predictions are padded to the canvas, weighted per pixel and
normalised so that the weights at every pixel sum to one.

Weight masks are stored as separable row/column profiles, so keeping all D
masks costs O(sum of region perimeters) rather than O(D * region area); the
region-sized weight tensor only exists inside a region's working set.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import NoiseSchedule, Scheduler, cfg_combine, ddpm_step, make_rng
from .errors import ConfigError, CoverageError, ShapeError
from .guidance import GuideSpec, apply_guides
from .memory import track, zeros
from .predictors import UNCOND, PromptId, batch_predict
from .region import Region

GAUSSIAN_VARIANCE = 0.01
MASK_KINDS = ("constant", "gaussian")
THREADS_ENV = "TESSERA_THREADS"


@dataclass(frozen=True)
class RegionSpec:
    region: Region
    prompt: PromptId
    guidance_scale: float = 1.0
    mask_kind: str = "gaussian"

    def __post_init__(self):
        if self.mask_kind not in MASK_KINDS:
            raise ConfigError(f"mask_kind must be one of {MASK_KINDS}, got {self.mask_kind!r}")
        if not (np.isfinite(self.guidance_scale) and self.guidance_scale >= 0):
            raise ConfigError(f"guidance_scale must be finite and >= 0, got {self.guidance_scale}")


@dataclass(frozen=True, eq=False)
class WeightMask:
    """Separable per-pixel weights over a region: ``values[p, q] = rows[p] * cols[q]``."""

    region: Region
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        if self.rows.shape != (self.region.height,) or self.cols.shape != (self.region.width,):
            raise ShapeError("mask profiles do not match region extents")
        if np.any(self.rows < 0) or np.any(self.cols < 0) or not (self.rows.any() and self.cols.any()):
            raise ConfigError("mask weights must be nonnegative with at least one positive value")

    @property
    def values(self) -> np.ndarray:
        """Dense ``(h, w, 1)`` weight tensor; broadcasts over channels."""
        return track(np.multiply.outer(self.rows, self.cols)[:, :, None])

    def scaled(self, c: float) -> WeightMask:
        return WeightMask(self.region, self.rows * c, self.cols.copy())


def _gaussian_profile(start: int, stop: int) -> np.ndarray:
    n = stop - start
    centre = (start + stop) / 2.0
    d = (np.arange(start, stop) + 0.5 - centre) / n
    return np.exp(-(d * d) / (2.0 * GAUSSIAN_VARIANCE)) / np.sqrt(2.0 * np.pi * GAUSSIAN_VARIANCE)


def build_weight_mask(spec: RegionSpec) -> WeightMask:
    """Constant ones, or a normalised-distance bivariate Gaussian density centred on the region.

    The Gaussian has covariance ``0.01 * I`` in coordinates where the region's
    height and width are both 1, evaluated at pixel centres.
    """
    r = spec.region
    if spec.mask_kind == "constant":
        return WeightMask(r, np.ones(r.height), np.ones(r.width))
    return WeightMask(r, _gaussian_profile(r.row_start, r.row_end), _gaussian_profile(r.col_start, r.col_end))


def pad_into(x, r: Region, canvas_shape) -> np.ndarray:
    """Canvas-shaped tensor holding ``x`` at ``r`` and zeros elsewhere."""
    x = np.asarray(x)
    if x.shape[-3:-1] != (r.height, r.width):
        raise ShapeError(f"tensor {x.shape} does not match region {r.height}x{r.width}")
    *_, height, width, _ = canvas_shape
    r.check_within(height, width)
    out = zeros(tuple(canvas_shape)[:-3] + (height, width, x.shape[-1]))
    out[r.index] = x
    return out


def weight_total(masks: Sequence[WeightMask], canvas_shape) -> np.ndarray:
    """Per-pixel sum of padded mask weights, shape ``(H, W, 1)``; raises on uncovered pixels."""
    if not masks:
        raise ConfigError("at least one weight mask is required")
    *_, height, width, _ = canvas_shape
    total = zeros((height, width, 1))
    for m in masks:
        m.region.check_within(height, width)
        total[m.region.index] += m.values
    uncovered = np.argwhere(total[:, :, 0] <= 0)
    if uncovered.size:
        raise CoverageError(uncovered[0])
    return total


def normalizer(masks: Sequence[WeightMask], canvas_shape) -> np.ndarray:
    """Per-pixel reciprocal of the summed weights."""
    return track(1.0 / weight_total(masks, canvas_shape))


def mix_noise(region_preds: Sequence[np.ndarray], masks: Sequence[WeightMask], total: np.ndarray) -> np.ndarray:
    """Normalised weighted sum of padded region predictions.

    ``total`` is :func:`weight_total` of the masks (the reciprocal of the
    normaliser). Each region's weights are divided by it before accumulation,
    which keeps a pixel covered by a single region exactly equal to that
    region's prediction. Accumulation runs in list order.
    """
    if len(region_preds) != len(masks):
        raise ShapeError(f"{len(region_preds)} predictions for {len(masks)} masks")
    if not masks:
        raise ConfigError("at least one region is required")
    lead = np.shape(region_preds[0])[:-3]
    acc = zeros(lead + total.shape[:2] + (np.shape(region_preds[0])[-1],))
    for pred, m in zip(region_preds, masks):
        _accumulate(acc, pred, m, total)
    return acc


def _accumulate(acc: np.ndarray, pred: np.ndarray, m: WeightMask, total: np.ndarray) -> None:
    r = m.region
    if np.shape(pred)[-3:-1] != (r.height, r.width):
        raise ShapeError(f"prediction {np.shape(pred)} does not match region {r.height}x{r.width}")
    w = m.values
    w /= total[r.index]
    acc[r.index] += track(w * pred)


def region_guided_predict(predictor, x_t: np.ndarray, t: int, spec: RegionSpec) -> np.ndarray:
    """Guided noise prediction for one region's slice of the canvas."""
    xs = x_t[spec.region.index]
    s = spec.guidance_scale
    cond = predictor(xs, t, spec.prompt) if s != 0 else None
    uncond = predictor(xs, t, UNCOND) if s != 1 else None
    return cfg_combine(uncond if uncond is not None else cond, cond if cond is not None else uncond, s)


def _prediction_items(spec: RegionSpec, xs, t) -> list:
    s = spec.guidance_scale
    items = []
    if s != 1:
        items.append((xs, t, UNCOND))
    if s != 0:
        items.append((xs, t, spec.prompt))
    return items


def _combine_items(spec: RegionSpec, preds: list) -> np.ndarray:
    s = spec.guidance_scale
    if len(preds) == 1:
        return cfg_combine(preds[0], preds[0], s)
    return cfg_combine(preds[0], preds[1], s)


def predictions_per_step(regions: Sequence[RegionSpec]) -> int:
    """Predictor evaluations per denoising step (guidance endpoints need only one)."""
    return sum(1 if r.guidance_scale in (0, 1) else 2 for r in regions)


@dataclass(frozen=True, eq=False)
class CanvasJob:
    """Everything needed for one sampling run.

    ``height``/``width`` are in pixels. With ``latent_upscale > 1`` every
    region, guide placement and canvas dimension must be a multiple of it;
    :func:`tessera.latent.latent_job` maps such a job into latent space.
    :func:`sample` always works in the job's own index space.
    """

    height: int
    width: int
    channels: int
    schedule: NoiseSchedule
    regions: tuple
    seed: int
    predictor: Callable
    guides: tuple = ()
    latent_upscale: int = 1

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "guides", tuple(self.guides))
        self.validate()

    @property
    def canvas_shape(self) -> tuple:
        return (self.height, self.width, self.channels)

    def validate(self) -> None:
        for name in ("height", "width", "channels", "latent_upscale"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not self.regions:
            raise ConfigError("at least one region is required")
        for i, spec in enumerate(self.regions):
            spec.region.check_within(self.height, self.width, what=f"regions[{i}]")
        for i, g in enumerate(self.guides):
            if not isinstance(g, GuideSpec):
                raise ConfigError(f"guides[{i}] is not a GuideSpec")
            g.placement.check_within(self.height, self.width, what=f"guides[{i}]")
            if g.image.shape[2] != self.channels:
                raise ShapeError(f"guides[{i}] has {g.image.shape[2]} channels, canvas has {self.channels}")
        if self.latent_upscale > 1:
            from .latent import check_aligned

            check_aligned(self)
        weight_total([build_weight_mask(s) for s in self.regions], self.canvas_shape)

    def replace(self, **changes) -> CanvasJob:
        return replace(self, **changes)


def _threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        return max(0, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def sample(
    job: CanvasJob,
    mode: str = "sequential",
    n_samples: Optional[int] = None,
    on_step: Optional[Callable[[int, np.ndarray], None]] = None,
    scheduler: Scheduler = ddpm_step,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Run the mixed denoising loop and return ``x_0``.

    ``mode="sequential"`` evaluates and accumulates one region at a time, so
    peak memory does not grow with the number of regions. ``mode="batch"``
    gathers every region's predictor inputs into one :func:`batch_predict`
    call per step. Both reduce in region order and give identical results.

    ``n_samples`` adds a leading batch axis of independent chains drawn from
    the one seeded stream. ``on_step(t, x)`` sees the state at noise level
    ``t`` (``T`` for the initial state, then ``T-1 .. 0``). Guides in the job
    are applied after every step.
    """
    if mode not in ("sequential", "batch"):
        raise ConfigError(f"mode must be 'sequential' or 'batch', got {mode!r}")
    threads = _threads_from_env() if threads is None else threads
    sched = job.schedule
    shape = job.canvas_shape if n_samples is None else (int(n_samples),) + job.canvas_shape
    masks = [build_weight_mask(s) for s in job.regions]
    total = weight_total(masks, job.canvas_shape)
    rng = make_rng(job.seed)

    x = track(rng.standard_normal(shape))
    x_T = None
    if job.guides:
        x_T = x
        x = apply_guides(x, sched.T, job.guides, x_T, sched)
    if on_step is not None:
        on_step(sched.T, x)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for t in range(sched.T, 0, -1):
            if mode == "sequential":
                eps = _mixed_sequential(job, masks, total, x, t)
            else:
                eps = _mixed_batch(job, masks, total, x, t, pool)
            x = scheduler(x, eps, t, rng, sched)
            del eps
            if job.guides:
                apply_guides(x, t - 1, job.guides, x_T, sched, inplace=True)
            if on_step is not None:
                on_step(t - 1, x)
    finally:
        if pool is not None:
            pool.shutdown()
    return x


def _mixed_sequential(job, masks, total, x, t):
    acc = zeros(x.shape)
    for spec, m in zip(job.regions, masks):
        pred = region_guided_predict(job.predictor, x, t, spec)
        _accumulate(acc, pred, m, total)
        del pred
    return acc


def _mixed_batch(job, masks, total, x, t, pool):
    items, counts = [], []
    for spec in job.regions:
        its = _prediction_items(spec, x[spec.region.index], t)
        items.extend(its)
        counts.append(len(its))
    if pool is not None and not hasattr(job.predictor, "predict_batch"):
        flat = list(pool.map(lambda it: job.predictor(*it), items))
    else:
        flat = batch_predict(job.predictor, items)
    preds, k = [], 0
    for spec, n in zip(job.regions, counts):
        preds.append(_combine_items(spec, flat[k : k + n]))
        k += n
    del flat
    return mix_noise(preds, masks, total)
