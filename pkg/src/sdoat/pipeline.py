"""End-to-end experiment runner: simulate, reconstruct, characterize.

Each command takes a validated scenario and an output directory, writes
fixed-name artifacts there, and records a stage entry in run_manifest.json
with the SHA-256 of everything it read and wrote, the elapsed time, and any
warnings. A stage whose stored config digest, seed, and artifact digests all
still match is up to date and is skipped unless forced; because every stage
is deterministic for a given config and seed, skipping is always safe.

Artifact names inside the output directory:

    truth.f64/.json/.pgm   rasterized initial pressure [Pa]
    sinogram_phase.sg      demodulated phase sinogram [rad]
    recon.f64/.json/.pgm   reconstructed image (normalized)
    profile_<axis><i>.csv  image profiles along the configured cut lines
    noise_capture.sg       zero-field phase capture (noise_source "capture")
    report.txt             characterization summary
    run_manifest.json      stage ledger
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acoustics import STAGE_PHASE, forward_sinogram
from .config import ScenarioConfig
from .errors import GateError, ValidationError
from .formats import (
    atomic_write_bytes,
    read_image,
    read_sinogram,
    sha256_file,
    write_image,
    write_profile_csv,
    write_report,
    write_sinogram,
)
from .metrics import (
    MetricsReport,
    coherence_summary,
    extract_profile,
    image_resolution_study,
    nep_and_density,
    resolution_bound,
    sensitivity_first_principles,
)
from .optics import apply_noise, pressure_to_phase, synthesize_balanced
from .phantom import PressureField
from .reconstruction import ReconImage, reconstruct_pipeline
from .receiver import demodulate_scan

MANIFEST_FORMAT = "sdoat-run/1"
MANIFEST_NAME = "run_manifest.json"
SINOGRAM_NAME = "sinogram_phase.sg"
CAPTURE_NAME = "noise_capture.sg"
REPORT_NAME = "report.txt"
TRUTH_BASE = "truth"
RECON_BASE = "recon"

# a noise capture shorter than this cannot pin the floor to the advertised
# precision; it still runs, but the manifest carries a warning
MIN_CAPTURE_SAMPLES = 1_000_000


@dataclass
class StageResult:
    """What one pipeline stage read, wrote, and reported."""

    name: str
    elapsed_s: float = 0.0
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    skipped: bool = False


def load_manifest(out_dir: str | Path) -> dict:
    """Current run manifest, or a fresh skeleton if absent or unreadable."""
    path = Path(out_dir) / MANIFEST_NAME
    fresh = {"format": MANIFEST_FORMAT, "version": __version__, "stages": {}}
    if not path.is_file():
        return fresh
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return fresh
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        return fresh
    doc.setdefault("stages", {})
    return doc


def _store_stage(out_dir: Path, config: ScenarioConfig, result: StageResult) -> None:
    doc = load_manifest(out_dir)
    doc["format"] = MANIFEST_FORMAT
    doc["version"] = __version__
    doc["config_digest"] = config.source_digest
    doc["seed"] = config.seed
    doc["stages"][result.name] = {
        "elapsed_s": result.elapsed_s,
        "inputs": result.inputs,
        "outputs": result.outputs,
        "details": result.details,
        "warnings": result.warnings,
    }
    payload = json.dumps(doc, sort_keys=True, indent=2).encode("utf-8") + b"\n"
    atomic_write_bytes(Path(out_dir) / MANIFEST_NAME, payload)


def _resolve(out_dir: Path, key: str) -> Path:
    path = Path(key)
    return path if path.is_absolute() else out_dir / key


def stage_up_to_date(out_dir: str | Path, config: ScenarioConfig, name: str) -> bool:
    """True when the stage's stored digests all match what is on disk."""
    if not config.source_digest:
        return False  # config not loaded from a file; nothing to compare
    out_dir = Path(out_dir)
    doc = load_manifest(out_dir)
    if doc.get("config_digest") != config.source_digest or doc.get("seed") != config.seed:
        return False
    entry = doc["stages"].get(name)
    if not isinstance(entry, dict):
        return False
    for key, digest in {**entry.get("inputs", {}), **entry.get("outputs", {})}.items():
        path = _resolve(out_dir, key)
        if not path.is_file() or sha256_file(path) != digest:
            return False
    return True


def _guard_samples(config: ScenarioConfig) -> int:
    """Output-rate samples to pad and trim around each trace.

    The image-reject lowpass runs at the RF rate with a centered window, so
    its transient spans half the tap count at each trace end. Padding the
    phase series by that much (converted to output-rate samples, plus a small
    margin) before synthesis and trimming it after demodulation keeps the
    transient out of the analysis window.
    """
    m = config.rf_rate / config.receiver.output_rate
    return int(math.ceil(config.receiver.filter_taps / (2.0 * m))) + 4


def _synthesize_scan(
    phase_rows: np.ndarray, config: ScenarioConfig, shots: int, shot_index_base: int
) -> tuple[list, int]:
    """RF shot lists for a scan: guard-padded synthesis plus RF-stage noise."""
    guard = _guard_samples(config)
    phase_rate = 1.0 / config.geometry.dt
    rf_lists = []
    for a in range(phase_rows.shape[0]):
        row = phase_rows[a]
        padded = np.concatenate([np.full(guard, row[0]), row, np.full(guard, row[-1])])
        per_shot = []
        for s in range(shots):
            trace = synthesize_balanced(padded, config.optics, config.rf_rate, phase_rate)
            trace = apply_noise(trace, config.noise, shot_index_base + a * shots + s)
            per_shot.append(trace)
        rf_lists.append(per_shot)
    return rf_lists, guard


def cmd_simulate(
    config: ScenarioConfig, out_dir: str | Path, threads: int = 1, force: bool = False
) -> StageResult:
    """Phantom -> acoustic traces -> RF shots -> demodulated phase sinogram."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force and stage_up_to_date(out_dir, config, "simulate"):
        return StageResult(name="simulate", skipped=True)
    t0 = time.perf_counter()

    field_ = config.rasterize_phantom()
    source = "bitmap" if config.bitmap is not None else f"shapes[{len(config.shapes)}]"
    truth = ReconImage(
        grid=field_.grid,
        values=field_.values,
        metadata={"content": "initial_pressure_pa", "source": source},
    )
    write_image(out_dir / TRUTH_BASE, truth)

    c = config.sound_speed
    pressure = forward_sinogram(field_, config.geometry, c, threads=threads)
    phase_clean = pressure_to_phase(pressure, config.optics)
    rf_lists, guard = _synthesize_scan(
        phase_clean.data, config, config.shots_per_angle, shot_index_base=0
    )
    sinogram = demodulate_scan(
        rf_lists,
        config.receiver,
        config.geometry,
        c,
        noise=config.noise,
        trim_samples=guard,
        provenance=f"{phase_clean.provenance}|demodulate_scan(shots={config.shots_per_angle})",
    )
    write_sinogram(out_dir / SINOGRAM_NAME, sinogram)

    result = StageResult(
        name="simulate",
        elapsed_s=time.perf_counter() - t0,
        outputs={
            name: sha256_file(out_dir / name)
            for name in (SINOGRAM_NAME, "truth.f64", "truth.json", "truth.pgm")
        },
        details={
            "n_angles": config.geometry.n_angles,
            "n_samples": config.geometry.n_samples,
            "shots_per_angle": config.shots_per_angle,
            "guard_samples": guard,
            "grid_shape": [field_.grid.ny, field_.grid.nx],
            "sound_speed": c,
        },
    )
    _store_stage(out_dir, config, result)
    return result


def cmd_reconstruct(
    config: ScenarioConfig, out_dir: str | Path, threads: int = 1, force: bool = False
) -> StageResult:
    """Phase sinogram -> filtered, back-projected image plus cut profiles."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force and stage_up_to_date(out_dir, config, "reconstruct"):
        return StageResult(name="reconstruct", skipped=True)
    t0 = time.perf_counter()

    sinogram_path = out_dir / SINOGRAM_NAME
    if not sinogram_path.is_file():
        raise ValidationError(
            f"{sinogram_path} not found; run simulate first", code="missing_input"
        )
    sinogram = read_sinogram(sinogram_path)
    truth = read_image(out_dir / TRUTH_BASE)
    inputs = {
        SINOGRAM_NAME: sha256_file(sinogram_path),
        "truth.json": sha256_file(out_dir / "truth.json"),
    }

    image = reconstruct_pipeline(sinogram, config.optics, truth.grid, config.recon, threads)
    write_image(out_dir / RECON_BASE, image)

    outputs = {
        name: sha256_file(out_dir / name) for name in ("recon.f64", "recon.json", "recon.pgm")
    }
    for i, line in enumerate(config.metrics.cut_lines):
        coords = truth.grid.x_coords() if line.axis == "x" else truth.grid.y_coords()
        profile = extract_profile(image.values, truth.grid, line)
        name = f"profile_{line.axis}{i}.csv"
        write_profile_csv(
            out_dir / name,
            coords,
            profile,
            header=f"cut axis={line.axis} coordinate={line.coordinate!r} m",
        )
        outputs[name] = sha256_file(out_dir / name)

    warnings = []
    if image.metadata.get("coverage_warnings", 0):
        warnings.append(
            f"{image.metadata['coverage_warnings']} trace(s) ended before the far grid corner"
        )
    result = StageResult(
        name="reconstruct",
        elapsed_s=time.perf_counter() - t0,
        inputs=inputs,
        outputs=outputs,
        details={
            "kernel": config.recon.kernel,
            "cutoff": config.recon.cutoff,
            "normalization_factor": image.metadata.get("normalization_factor"),
        },
        warnings=warnings,
    )
    _store_stage(out_dir, config, result)
    return result


def _noise_rows(config: ScenarioConfig, out_dir: Path, inputs: dict, outputs: dict):
    """Phase rows for noise statistics, per the configured noise source.

    "capture" runs a zero-field scan (one shot per angle) through the full
    RF chain with noise streams disjoint from the imaging scan; "file" loads
    a stored phase sinogram; "nominal" returns None, meaning trust the
    configured phase_noise_std.
    """
    source = config.metrics.noise_source
    if source == "nominal":
        return None, 0.0
    if source == "file":
        path = Path(config.metrics.noise_file)
        capture = read_sinogram(path)
        if capture.stage != STAGE_PHASE:
            raise ValidationError(
                f"{path}: noise file must hold a phase sinogram, got {capture.stage!r}",
                code="noise_file",
            )
        key = str(path) if not path.is_relative_to(out_dir) else path.name
        inputs[key] = sha256_file(path)
        return capture.data, capture.geometry.dt
    geometry = config.geometry
    zero_rows = np.zeros((geometry.n_angles, geometry.n_samples))
    base = config.shots_per_angle * geometry.n_angles
    rf_lists, guard = _synthesize_scan(zero_rows, config, shots=1, shot_index_base=base)
    capture = demodulate_scan(
        rf_lists,
        config.receiver,
        geometry,
        config.sound_speed,
        noise=config.noise,
        trim_samples=guard,
        shot_index_base=base,
        provenance="noise_capture(shots=1)",
    )
    write_sinogram(out_dir / CAPTURE_NAME, capture)
    outputs[CAPTURE_NAME] = sha256_file(out_dir / CAPTURE_NAME)
    return capture.data, geometry.dt


def _apply_gates(report: MetricsReport, gates: dict) -> list[str]:
    violations = []
    for key, bound in gates.items():
        field_name, kind = key[:-4], key[-3:]
        value = getattr(report, field_name, None)
        if value is None or not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValidationError(
                f"gate {key!r} does not name a numeric report field", code="gate_field"
            )
        if kind == "max" and value > bound:
            violations.append(f"{field_name}={value:g} exceeds gate {key}={bound:g}")
        if kind == "min" and value < bound:
            violations.append(f"{field_name}={value:g} is below gate {key}={bound:g}")
    return violations


def cmd_metrics(config: ScenarioConfig, out_dir: str | Path, force: bool = False) -> StageResult:
    """Noise, sensitivity, NEP, resolution figures; applies configured gates."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force and stage_up_to_date(out_dir, config, "metrics"):
        return StageResult(name="metrics", skipped=True)
    t0 = time.perf_counter()
    inputs: dict = {}
    outputs: dict = {}
    warnings: list = []

    optics = config.optics
    path_length = config.metrics.path_length or optics.interaction_length
    sensitivity = sensitivity_first_principles(optics, path_length)

    rows, dt = _noise_rows(config, out_dir, inputs, outputs)
    if rows is None:
        noise_floor_mrad = config.noise.phase_noise_std * 1e3
        noise_mean_mrad = 0.0
        slope = slope_sigma = 0.0
        flagged = False
    else:
        if rows.size < MIN_CAPTURE_SAMPLES:
            warnings.append(
                f"noise capture has {rows.size} samples; statistics want "
                f"at least {MIN_CAPTURE_SAMPLES}"
            )
        summary = coherence_summary(rows, dt)
        noise_floor_mrad = summary["std"] * 1e3
        noise_mean_mrad = summary["mean"] * 1e3
        slope = summary["slope"]
        slope_sigma = summary["slope_sigma"]
        flagged = summary["flagged"]
        if flagged:
            warnings.append(
                f"residual carrier detected: phase slope {slope:g} rad/s "
                f"(offset {slope / (2 * np.pi):g} Hz)"
            )

    nep = nep_and_density(noise_floor_mrad, sensitivity, config.metrics.bandwidth)
    r_bw = resolution_bound(config.sound_speed, config.metrics.bandwidth)

    study = {"fwhm_x": (), "fwhm_y": (), "truth_fwhm_x": (), "truth_fwhm_y": ()}
    recon_json = out_dir / "recon.json"
    truth_json = out_dir / "truth.json"
    if recon_json.is_file() and truth_json.is_file():
        image = read_image(out_dir / RECON_BASE)
        truth = read_image(out_dir / TRUTH_BASE)
        inputs["recon.f64"] = sha256_file(out_dir / "recon.f64")
        inputs["truth.f64"] = sha256_file(out_dir / "truth.f64")
        if np.any(truth.values):
            truth_field = PressureField(grid=truth.grid, values=truth.values)
            study = image_resolution_study(
                image, truth_field, list(config.metrics.cut_lines)
            )
        else:
            warnings.append("truth image is empty; resolution study skipped")
    else:
        warnings.append("no reconstruction found; resolution study skipped")

    report = MetricsReport(
        sensitivity=sensitivity,
        noise_floor=noise_floor_mrad,
        nep=nep["nep_pa"],
        nep_density=nep["nep_density_mpa_rt_hz"],
        r_bw=r_bw,
        bandwidth_used=config.metrics.bandwidth,
        sound_speed_used=config.sound_speed,
        noise_mean=noise_mean_mrad,
        fwhm_x=tuple(study["fwhm_x"]),
        fwhm_y=tuple(study["fwhm_y"]),
        truth_fwhm_x=tuple(study["truth_fwhm_x"]),
        truth_fwhm_y=tuple(study["truth_fwhm_y"]),
        coherence_slope=slope,
        coherence_slope_sigma=slope_sigma,
        coherence_flagged=flagged,
    )
    write_report(out_dir / REPORT_NAME, report)
    outputs[REPORT_NAME] = sha256_file(out_dir / REPORT_NAME)

    violations = _apply_gates(report, config.metrics.gates)
    result = StageResult(
        name="metrics",
        elapsed_s=time.perf_counter() - t0,
        inputs=inputs,
        outputs=outputs,
        details={
            "noise_source": config.metrics.noise_source,
            "path_length": path_length,
            "gate_violations": violations,
        },
        warnings=warnings,
    )
    _store_stage(out_dir, config, result)
    if violations:
        raise GateError("gate check failed:\n  " + "\n  ".join(violations))
    return result


def cmd_pipeline(
    config: ScenarioConfig, out_dir: str | Path, threads: int = 1, force: bool = False
) -> list[StageResult]:
    """simulate -> reconstruct -> metrics, skipping stages that are up to date."""
    return [
        cmd_simulate(config, out_dir, threads=threads, force=force),
        cmd_reconstruct(config, out_dir, threads=threads, force=force),
        cmd_metrics(config, out_dir, force=force),
    ]
