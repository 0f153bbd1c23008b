"""JSON job configuration.

Schema (unknown keys are rejected at every level)::

    {
      "canvas":    {"height": int, "width": int, "channels": 1 | 3},
      "schedule":  {"kind": "linear", "T": int, "beta_start": float, "beta_end": float},
      "seed":      int in [0, 2**64),
      "latent":    {"upscale": int},                        # optional, 1 disables latent mode
      "regions":   [{"rows": [a, b], "cols": [c, d], "prompt": str | null,
                     "guidance_scale": float,               # optional, default 1.0
                     "weights": "gaussian" | "constant"}],  # optional, default "gaussian"
      "guides":    [{"image": path, "rows": [a, b], "cols": [c, d], "strength": float,
                     "noise_exponent": 0.5 | 1}],           # optional
      "predictor": {"kind": "analytic-gaussian", "sigma0": float,
                    "uncond_sigma0": float,                 # optional, default 1.0
                    "uncond_mean": pattern,                 # optional, default flat 0
                    "prompts": {id: pattern}}
    }

    pattern := {"kind": "flat", "value": v}
             | {"kind": "gradient", "start": v, "end": v}
             | {"kind": "checkerboard", "low": v, "high": v, "size": int}

Schedule fields other than ``kind`` default to T=1000, 1e-4, 0.02. Region and
guide indices are half-open pixel ranges. A null prompt selects the
unconditioned prediction. Guide image paths are resolved relative to the
config file; images are binary PGM/PPM.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .diffusion import make_linear_schedule
from .errors import ConfigError, TesseraError
from .guidance import NOISE_EXPONENTS, GuideSpec
from .imageio import read_image
from .mixer import CanvasJob, RegionSpec
from .predictors import UNCOND, AnalyticGaussianPredictor, AnalyticTarget, Checkerboard, Flat, HorizontalGradient
from .region import Region


class ConfigParseError(ConfigError):
    """The config file is not well-formed JSON."""

    def __init__(self, msg: str, line: int, column: int):
        self.line, self.column = line, column
        super().__init__(f"{msg} (line {line}, column {column})")


class ConfigFieldError(ConfigError):
    """A config field violates its constraint."""

    def __init__(self, field: str, msg: str):
        self.field = field
        super().__init__(f"{field}: {msg}")


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _mapping(value, path: str, required=(), optional=()) -> dict:
    if not isinstance(value, dict):
        raise ConfigFieldError(path or "<root>", "expected an object")
    for key in value:
        if key not in required and key not in optional:
            raise ConfigFieldError(_join(path, key), "unknown field")
    for key in required:
        if key not in value:
            raise ConfigFieldError(_join(path, key), "missing required field")
    return value


def _int(value, path: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigFieldError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigFieldError(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigFieldError(path, f"must be <= {hi}, got {value}")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigFieldError(path, f"expected a number, got {value!r}")
    return float(value)


def _range(value, path: str, limit: int, limit_name: str) -> tuple[int, int]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigFieldError(path, "expected [start, end]")
    a = _int(value[0], path, lo=0)
    b = _int(value[1], path)
    if b <= a:
        raise ConfigFieldError(path, f"end {b} must exceed start {a}")
    if b > limit:
        raise ConfigFieldError(path, f"end {b} exceeds canvas {limit_name} {limit}")
    return a, b


def _pattern(value, path: str):
    kind = _mapping(value, path, required=("kind",), optional=("value", "start", "end", "low", "high", "size"))["kind"]
    if kind == "flat":
        _mapping(value, path, required=("kind", "value"))
        return Flat(_number(value["value"], _join(path, "value")))
    if kind == "gradient":
        _mapping(value, path, required=("kind", "start", "end"))
        return HorizontalGradient(_number(value["start"], _join(path, "start")), _number(value["end"], _join(path, "end")))
    if kind == "checkerboard":
        _mapping(value, path, required=("kind", "low", "high"), optional=("size",))
        size = _int(value.get("size", 1), _join(path, "size"), lo=1)
        return Checkerboard(_number(value["low"], _join(path, "low")), _number(value["high"], _join(path, "high")), size)
    raise ConfigFieldError(_join(path, "kind"), f"unknown pattern kind {kind!r}")


def _predictor(value, sched):
    p = _mapping(value, "predictor", required=("kind", "sigma0", "prompts"), optional=("uncond_sigma0", "uncond_mean"))
    if p["kind"] != "analytic-gaussian":
        raise ConfigFieldError("predictor.kind", f"unsupported predictor {p['kind']!r}")
    prompts = _mapping(p["prompts"], "predictor.prompts", optional=tuple(p["prompts"]) if isinstance(p["prompts"], dict) else ())
    means = {}
    for name, pat in prompts.items():
        if not name:
            raise ConfigFieldError("predictor.prompts", "prompt ids must be non-empty")
        means[name] = _pattern(pat, f"predictor.prompts.{name}")
    kwargs: dict[str, Any] = {"sigma0": _number(p["sigma0"], "predictor.sigma0")}
    if "uncond_sigma0" in p:
        kwargs["uncond_sigma0"] = _number(p["uncond_sigma0"], "predictor.uncond_sigma0")
    if "uncond_mean" in p:
        kwargs["uncond_mean"] = _pattern(p["uncond_mean"], "predictor.uncond_mean")
    try:
        target = AnalyticTarget(means, **kwargs)
    except ConfigError as exc:
        raise ConfigFieldError("predictor", str(exc)) from None
    return AnalyticGaussianPredictor(target, sched)


def parse_config(cfg, base_dir: str | os.PathLike = ".") -> CanvasJob:
    """Validate a decoded config object and build the job it describes."""
    cfg = _mapping(cfg, "", required=("canvas", "schedule", "seed", "regions", "predictor"), optional=("latent", "guides"))

    canvas = _mapping(cfg["canvas"], "canvas", required=("height", "width", "channels"))
    H = _int(canvas["height"], "canvas.height", lo=1)
    W = _int(canvas["width"], "canvas.width", lo=1)
    C = _int(canvas["channels"], "canvas.channels")
    if C not in (1, 3):
        raise ConfigFieldError("canvas.channels", f"must be 1 or 3, got {C}")

    s = _mapping(cfg["schedule"], "schedule", required=("kind",), optional=("T", "beta_start", "beta_end"))
    if s["kind"] != "linear":
        raise ConfigFieldError("schedule.kind", f"unsupported schedule {s['kind']!r}")
    try:
        sched = make_linear_schedule(
            _int(s.get("T", 1000), "schedule.T", lo=1),
            _number(s.get("beta_start", 1e-4), "schedule.beta_start"),
            _number(s.get("beta_end", 0.02), "schedule.beta_end"),
        )
    except ConfigFieldError:
        raise
    except ConfigError as exc:
        raise ConfigFieldError("schedule", str(exc)) from None

    seed = _int(cfg["seed"], "seed", lo=0, hi=2**64 - 1)

    U = 1
    if "latent" in cfg:
        lat = _mapping(cfg["latent"], "latent", required=("upscale",))
        U = _int(lat["upscale"], "latent.upscale", lo=1)
        for name, v in (("canvas.height", H), ("canvas.width", W)):
            if v % U:
                raise ConfigFieldError(name, f"{v} is not a multiple of latent.upscale {U}")

    def aligned(rng, path):
        for v in rng:
            if v % U:
                raise ConfigFieldError(path, f"index {v} is not a multiple of latent.upscale {U}")
        return rng

    predictor = _predictor(cfg["predictor"], sched)

    if not isinstance(cfg["regions"], list) or not cfg["regions"]:
        raise ConfigFieldError("regions", "expected a non-empty list")
    regions = []
    for i, r in enumerate(cfg["regions"]):
        path = f"regions[{i}]"
        r = _mapping(r, path, required=("rows", "cols", "prompt"), optional=("guidance_scale", "weights"))
        rows = aligned(_range(r["rows"], path + ".rows", H, "height"), path + ".rows")
        cols = aligned(_range(r["cols"], path + ".cols", W, "width"), path + ".cols")
        prompt = r["prompt"]
        if prompt is not None and (not isinstance(prompt, str) or prompt not in predictor.target.means):
            raise ConfigFieldError(path + ".prompt", f"unknown prompt {prompt!r}")
        scale = _number(r.get("guidance_scale", 1.0), path + ".guidance_scale")
        if scale < 0:
            raise ConfigFieldError(path + ".guidance_scale", f"must be >= 0, got {scale}")
        kind = r.get("weights", "gaussian")
        if kind not in ("gaussian", "constant"):
            raise ConfigFieldError(path + ".weights", f"must be 'gaussian' or 'constant', got {kind!r}")
        regions.append(RegionSpec(Region(*rows, *cols), UNCOND if prompt is None else prompt, scale, kind))

    guides = []
    raw_guides = cfg.get("guides", [])
    if not isinstance(raw_guides, list):
        raise ConfigFieldError("guides", "expected a list")
    for i, g in enumerate(raw_guides):
        path = f"guides[{i}]"
        g = _mapping(g, path, required=("image", "rows", "cols", "strength"), optional=("noise_exponent",))
        rows = aligned(_range(g["rows"], path + ".rows", H, "height"), path + ".rows")
        cols = aligned(_range(g["cols"], path + ".cols", W, "width"), path + ".cols")
        strength = _number(g["strength"], path + ".strength")
        if not 0.0 <= strength <= 1.0:
            raise ConfigFieldError(path + ".strength", f"must be in [0, 1], got {strength}")
        exponent = _number(g.get("noise_exponent", 0.5), path + ".noise_exponent")
        if exponent not in NOISE_EXPONENTS:
            raise ConfigFieldError(path + ".noise_exponent", f"must be 0.5 or 1, got {exponent}")
        if not isinstance(g["image"], str):
            raise ConfigFieldError(path + ".image", "expected a file path")
        try:
            image = read_image(Path(base_dir) / g["image"])
        except (OSError, TesseraError) as exc:
            raise ConfigFieldError(path + ".image", f"cannot load image: {exc}") from None
        want = (rows[1] - rows[0], cols[1] - cols[0], C)
        if image.shape != want:
            raise ConfigFieldError(path + ".image", f"image shape {image.shape} does not match placement {want}")
        guides.append(GuideSpec(image, Region(*rows, *cols), strength, exponent))

    try:
        return CanvasJob(H, W, C, sched, regions, seed, predictor, guides, latent_upscale=U)
    except ConfigError as exc:
        raise ConfigFieldError("regions", str(exc)) from None


def parse_job(path: str | os.PathLike) -> CanvasJob:
    """Read, parse and fully validate a JSON job file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None
    return parse_config(cfg, base_dir=path.parent)
