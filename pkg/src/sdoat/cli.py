"""Command-line interface: one scenario file in, deterministic artifacts out.

    sdoat pipeline --config scenario.toml --out runs/demo
    sdoat simulate | reconstruct | metrics   (individual stages)
    sdoat validate-config --config scenario.toml
    sdoat formats                            (on-disk format reference)

Exit codes: 0 success, 2 invalid configuration or input, 3 computation
failure, 4 violated metrics gate.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import load_config, with_seed
from .errors import SdoatError
from .pipeline import StageResult, cmd_metrics, cmd_pipeline, cmd_reconstruct, cmd_simulate

_FORMATS_TEXT = """\
sinogram (.sg)
  8-byte magic "SDOATSG1", uint64 little-endian header length, canonical JSON
  header (stage, sound_speed, provenance, detector_offset, angles, t_start,
  dt, n_samples), then row-major little-endian float64 samples, one row per
  angle. Stage "line_pressure" holds Pa*m, stage "phase" holds radians.

image (.f64 + .json + .pgm)
  <base>.f64: row-major little-endian float64 pixels, row 0 at y minimum.
  <base>.json: grid descriptor (nx, ny, pitch, center, scan_radius) plus a
  free-form metadata object.
  <base>.pgm: 16-bit binary PGM preview, min-max scaled, row 0 at y maximum.

report (.txt)
  One key=value pair per line. Floats use repr and round-trip exactly;
  width lists are comma-separated; booleans are "true"/"false".

run_manifest.json
  Per-stage ledger: config digest, seed, input/output SHA-256 digests,
  elapsed seconds, warnings. A stage whose digests all match is skipped
  on the next run unless --force is given.
"""


def _add_run_arguments(parser: argparse.ArgumentParser, with_threads: bool = True) -> None:
    parser.add_argument("--config", required=True, help="scenario TOML file")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    if with_threads:
        parser.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    parser.add_argument("--force", action="store_true", help="re-run stages that are up to date")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdoat",
        description="software-defined optoacoustic tomography simulator and toolkit",
    )
    parser.add_argument("--version", action="version", version=f"sdoat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_arguments(sub.add_parser("simulate", help="phantom to demodulated phase sinogram"))
    _add_run_arguments(sub.add_parser("reconstruct", help="phase sinogram to image"))
    _add_run_arguments(sub.add_parser("metrics", help="noise, NEP, resolution report"), False)
    _add_run_arguments(sub.add_parser("pipeline", help="simulate, reconstruct, metrics in order"))

    validate = sub.add_parser("validate-config", help="parse and validate a scenario file")
    validate.add_argument("--config", required=True, help="scenario TOML file")

    sub.add_parser("formats", help="describe the on-disk file formats")
    return parser


def _print_result(result: StageResult) -> None:
    if result.skipped:
        print(f"{result.name}: up to date, skipped")
    else:
        wrote = " ".join(sorted(result.outputs)) if result.outputs else "nothing"
        print(f"{result.name}: {result.elapsed_s:.2f} s, wrote {wrote}")
    for warning in result.warnings:
        print(f"{result.name}: warning: {warning}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "formats":
        print(_FORMATS_TEXT, end="")
        return 0
    try:
        config = load_config(args.config)
        if args.command == "validate-config":
            geometry = config.geometry
            print(f"ok: {args.config}")
            print(f"  seed {config.seed}, sound speed {config.sound_speed:.3f} m/s")
            print(
                f"  grid {config.grid.nx}x{config.grid.ny} at {config.grid.pitch * 1e6:.1f} um, "
                f"{len(config.shapes)} shape(s)"
                + (", bitmap" if config.bitmap is not None else "")
            )
            print(
                f"  scan {geometry.n_angles} angles x {config.shots_per_angle} shot(s), "
                f"{geometry.n_samples} samples at {1.0 / geometry.dt:.3g} S/s"
            )
            return 0
        if args.seed is not None:
            config = with_seed(config, args.seed)
        threads = max(1, getattr(args, "threads", 1))
        if args.command == "simulate":
            results = [cmd_simulate(config, args.out, threads=threads, force=args.force)]
        elif args.command == "reconstruct":
            results = [cmd_reconstruct(config, args.out, threads=threads, force=args.force)]
        elif args.command == "metrics":
            results = [cmd_metrics(config, args.out, force=args.force)]
        else:
            results = cmd_pipeline(config, args.out, threads=threads, force=args.force)
    except SdoatError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return e.exit_code
    for result in results:
        _print_result(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
