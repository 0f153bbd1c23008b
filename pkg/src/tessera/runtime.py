"""Job execution: sampling, image output, mask dumps and run reports."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imageio import write_image
from .latent import StandInCodec, decode, latent_job
from .memory import tracking
from .mixer import CanvasJob, build_weight_mask, predictions_per_step, sample, weight_total


@dataclass
class RunReport:
    outputs: list
    wall_time_s: float
    steps: int
    regions: int
    predictions_per_step: int
    predictions_total: int
    peak_live_tensor_bytes: int
    seed: int
    mode: str
    mask_files: list = field(default_factory=list)
    step_files: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def normalized_weights(job: CanvasJob) -> list[np.ndarray]:
    """Per-region normalised weights padded to the canvas, each ``(H, W, 1)``."""
    masks = [build_weight_mask(s) for s in job.regions]
    total = weight_total(masks, job.canvas_shape)
    out = []
    for m in masks:
        w = np.zeros_like(total)
        w[m.region.index] = m.values / total[m.region.index]
        out.append(w)
    return out


def _image_suffix(channels: int) -> str:
    return ".ppm" if channels == 3 else ".pgm"


def write_mask_images(job: CanvasJob, directory) -> list[str]:
    """Write each region's normalised weights as a grayscale PGM (0 -> black, 1 -> white)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    U = job.latent_upscale
    work = latent_job(job) if U > 1 else job
    paths = []
    for i, w in enumerate(normalized_weights(work)):
        if U > 1:
            w = decode(w, StandInCodec(U))
        p = directory / f"mask_{i:02d}.pgm"
        write_image(2.0 * w - 1.0, p)
        paths.append(str(p))
    return paths


def run(
    job: CanvasJob,
    out,
    mode: str = "sequential",
    dump_masks=None,
    dump_steps: Optional[int] = None,
    report_path=None,
    threads: Optional[int] = None,
) -> RunReport:
    """Sample ``job``, write ``x_0`` to ``out`` and return a :class:`RunReport`."""
    out = Path(out)
    U = job.latent_upscale
    codec = StandInCodec(U)
    work = latent_job(job, codec) if U > 1 else job

    step_files: list[str] = []
    on_step = None
    if dump_steps:
        step_dir = out.with_name(out.stem + "_steps")
        step_dir.mkdir(parents=True, exist_ok=True)

        def on_step(t, x):
            if t % dump_steps == 0 or t == work.schedule.T:
                img = decode(x, codec) if U > 1 else x
                p = step_dir / f"step_{t:05d}{_image_suffix(job.channels)}"
                write_image(img, p)
                step_files.append(str(p))

    start = time.perf_counter()
    with tracking() as tracker:
        x0 = sample(work, mode=mode, on_step=on_step, threads=threads)
        peak = tracker.peak_bytes
    if U > 1:
        x0 = decode(x0, codec)
    write_image(x0, out)
    wall = time.perf_counter() - start

    mask_files = write_mask_images(job, dump_masks) if dump_masks else []
    per_step = predictions_per_step(job.regions)
    report = RunReport(
        outputs=[str(out)],
        wall_time_s=wall,
        steps=job.schedule.T,
        regions=len(job.regions),
        predictions_per_step=per_step,
        predictions_total=per_step * job.schedule.T,
        peak_live_tensor_bytes=int(peak),
        seed=int(job.seed),
        mode=mode,
        mask_files=mask_files,
        step_files=step_files,
    )
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")
    return report
