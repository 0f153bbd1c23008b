"""Tiled diffusion sampling with per-region noise mixing."""

from .diffusion import (
    NoiseSchedule,
    cfg_combine,
    ddpm_step,
    forward_jump,
    forward_step,
    make_linear_schedule,
    make_rng,
    posterior_mean_from_eps,
    posterior_params,
    sample_ddpm,
    simple_loss,
)
from .errors import AlignmentError, ConfigError, CoverageError, PlacementError, ShapeError, StepError, TesseraError
from .guidance import GuideSpec, apply_guides, noisy_guide, override_threshold, sample_with_guides
from .latent import StandInCodec, decode, encode, latent_job, sample_decoded, to_latent_region
from .mixer import (
    CanvasJob,
    RegionSpec,
    WeightMask,
    build_weight_mask,
    mix_noise,
    normalizer,
    pad_into,
    region_guided_predict,
    sample,
    weight_total,
)
from .predictors import (
    UNCOND,
    AnalyticGaussianPredictor,
    AnalyticTarget,
    Checkerboard,
    Flat,
    HorizontalGradient,
    analytic_eps,
    analytic_posterior_x0,
    batch_predict,
)
from .region import Region

__version__ = "0.1.0"
