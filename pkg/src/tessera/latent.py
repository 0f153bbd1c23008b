"""Pixel <-> latent region mapping and a box-filter stand-in codec.

Each latent cell corresponds to a ``U x U`` block of pixels, so a pixel region
maps to latent space by dividing its indices by ``U``. The stand-in codec
encodes by block averaging and decodes by nearest-neighbour upsampling; it is
linear and strictly local, so the block correspondence holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError
from .guidance import GuideSpec
from .memory import track
from .region import Region


@dataclass(frozen=True)
class StandInCodec:
    upscale: int = 8

    def __post_init__(self):
        if int(self.upscale) != self.upscale or self.upscale < 1:
            raise ConfigError(f"upscale must be a positive integer, got {self.upscale}")


LatentMapping = StandInCodec


def to_latent_region(r: Region, U: int) -> Region:
    for name in ("row_start", "row_end", "col_start", "col_end"):
        v = getattr(r, name)
        if v % U:
            raise AlignmentError(f"{name}={v} is not a multiple of upscale {U}")
    return Region(r.row_start // U, r.row_end // U, r.col_start // U, r.col_end // U)


def _check_dims(x, U: int) -> None:
    *_, h, w, _ = np.shape(x)
    if h % U or w % U:
        raise AlignmentError(f"image {h}x{w} is not divisible by upscale {U}")


def encode(x, codec: StandInCodec) -> np.ndarray:
    U = codec.upscale
    x = np.asarray(x, dtype=np.float64)
    _check_dims(x, U)
    *lead, h, w, c = x.shape
    blocks = x.reshape(*lead, h // U, U, w // U, U, c)
    return track(blocks.mean(axis=(-4, -2)))


def decode(z, codec: StandInCodec) -> np.ndarray:
    U = codec.upscale
    z = np.asarray(z, dtype=np.float64)
    return track(np.repeat(np.repeat(z, U, axis=-3), U, axis=-2))


def check_aligned(job) -> None:
    """Raise :class:`AlignmentError` unless the job is expressible in latent space."""
    U = job.latent_upscale
    if job.height % U or job.width % U:
        raise AlignmentError(f"canvas {job.height}x{job.width} is not divisible by upscale {U}")
    for i, spec in enumerate(job.regions):
        try:
            to_latent_region(spec.region, U)
        except AlignmentError as exc:
            raise AlignmentError(f"regions[{i}]: {exc}") from None
    for i, g in enumerate(job.guides):
        try:
            to_latent_region(g.placement, U)
        except AlignmentError as exc:
            raise AlignmentError(f"guides[{i}]: {exc}") from None


def latent_job(job, mapping: StandInCodec | None = None):
    """The same job with canvas, regions and guides divided by the upscale factor.

    Guide images are encoded with the stand-in codec. Weight masks follow the
    mapped regions, so they are rebuilt at latent resolution when sampled.
    """
    codec = mapping or StandInCodec(job.latent_upscale)
    U = codec.upscale
    if U == 1:
        return job
    if job.height % U or job.width % U:
        raise AlignmentError(f"canvas {job.height}x{job.width} is not divisible by upscale {U}")
    regions = [
        type(spec)(to_latent_region(spec.region, U), spec.prompt, spec.guidance_scale, spec.mask_kind)
        for spec in job.regions
    ]
    guides = [
        GuideSpec(encode(g.image, codec), to_latent_region(g.placement, U), g.strength, g.noise_exponent)
        for g in job.guides
    ]
    return job.replace(
        height=job.height // U, width=job.width // U, regions=regions, guides=guides, latent_upscale=1
    )


def sample_decoded(job, **kwargs) -> np.ndarray:
    """Sample ``job`` in latent space (when ``latent_upscale > 1``) and decode to pixels."""
    from .mixer import sample

    if job.latent_upscale == 1:
        return sample(job, **kwargs)
    codec = StandInCodec(job.latent_upscale)
    return decode(sample(latent_job(job, codec), **kwargs), codec)
