"""Command line entry point: ``tessera generate <config.json> ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import parse_job
from .errors import ConfigError
from .runtime import run

log = logging.getLogger("tessera")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tessera", description="Region-mixed diffusion sampling.")
    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("generate", help="sample an image from a JSON job config")
    gen.add_argument("config", help="path to the job config (JSON)")
    gen.add_argument("--out", help="output image path (default: <config stem>.ppm/.pgm)")
    modes = gen.add_mutually_exclusive_group()
    modes.add_argument("--sequential", dest="mode", action="store_const", const="sequential",
                       help="evaluate regions one at a time (default; lowest memory)")
    modes.add_argument("--batch", dest="mode", action="store_const", const="batch",
                       help="batch all region predictions of a step")
    gen.add_argument("--dump-masks", metavar="DIR", help="write normalised region weights as PGM files")
    gen.add_argument("--dump-steps", metavar="N", type=int, help="write a snapshot every N steps")
    gen.add_argument("--report", metavar="PATH", help="write a JSON run report")
    gen.add_argument("-v", "--verbose", action="store_true")
    gen.set_defaults(mode="sequential")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.dump_steps is not None and args.dump_steps < 1:
        print("error: --dump-steps must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        job = parse_job(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or str(Path(args.config).with_suffix(".ppm" if job.channels == 3 else ".pgm").name)
    try:
        report = run(job, out, mode=args.mode, dump_masks=args.dump_masks,
                     dump_steps=args.dump_steps, report_path=args.report)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s in %.2fs (peak %d tensor bytes)", out, report.wall_time_s, report.peak_live_tensor_bytes)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
