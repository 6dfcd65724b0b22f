"""Scenario configuration: one TOML file describes one experiment.

Sections: [medium] (temperature_c or sound_speed, exactly one), [phantom]
(grid plus shapes or a bitmap), [geometry] (detector circle and timing),
[optics], [noise], [receiver], [scan], [recon], [metrics]. A top-level
``seed`` feeds every random draw; the CLI --seed flag overrides it.

Validation is collected: every invalid field is reported by name in one
error, so a config can be fixed in a single pass.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .acoustics import ScanGeometry, TimeWindow, WaterState, covering_window, uniform_angles
from .errors import ValidationError
from .metrics import CutLine
from .optics import NoiseModel, OpticalParams
from .phantom import (
    DEFAULT_SCAN_RADIUS,
    Grid2D,
    PressureField,
    ShapeSpec,
    import_bitmap,
    rasterize,
)
from .reconstruction import ReconConfig
from .receiver import ReceiverConfig

NOISE_SOURCES = ("capture", "nominal", "file")


@dataclass(frozen=True)
class MetricsSettings:
    """Settings for the characterization stage."""

    bandwidth: float = 2e6
    noise_source: str = "capture"
    noise_file: str | None = None
    path_length: float | None = None  # defaults to optics.interaction_length
    cut_lines: tuple[CutLine, ...] = (CutLine("x", 0.0), CutLine("y", 0.0))
    gates: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully validated scenario, ready for the pipeline commands."""

    seed: int
    sound_speed: float
    grid: Grid2D
    shapes: tuple[ShapeSpec, ...]
    bitmap: dict | None
    geometry: ScanGeometry
    optics: OpticalParams
    rf_rate: float
    noise: NoiseModel
    receiver: ReceiverConfig
    shots_per_angle: int
    recon: ReconConfig
    metrics: MetricsSettings
    source_digest: str = ""

    def rasterize_phantom(self) -> PressureField:
        if self.bitmap is not None:
            pixels = _load_bitmap_pixels(self.bitmap["path"])
            return import_bitmap(
                pixels,
                white_level=self.bitmap["white_level"],
                physical_width=self.bitmap["physical_width"],
                amplitude=self.bitmap["amplitude"],
                scan_radius=self.grid.scan_radius,
            )
        return rasterize(list(self.shapes), self.grid)


def _load_bitmap_pixels(path: str) -> np.ndarray:
    from .formats import read_pgm

    return read_pgm(path)


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    """Copy of a scenario with the seed (and every derived stream) replaced."""
    import dataclasses

    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ValidationError(f"seed must be a 64-bit non-negative int, got {seed!r}")
    return dataclasses.replace(
        config, seed=seed, noise=dataclasses.replace(config.noise, rng_seed=seed)
    )


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def fail(self, field_name: str, message: str) -> None:
        self.errors.append(f"{field_name}: {message}")

    def number(self, table: dict, section: str, key: str, default=None, minimum=None):
        value = table.get(key, default)
        if value is None:
            self.fail(f"{section}.{key}", "missing")
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{section}.{key}", f"expected a number, got {value!r}")
            return None
        if not np.isfinite(value):
            self.fail(f"{section}.{key}", "must be finite")
            return None
        if minimum is not None and value < minimum:
            self.fail(f"{section}.{key}", f"must be >= {minimum}")
            return None
        return float(value)

    def integer(self, table: dict, section: str, key: str, default=None, minimum=None):
        value = table.get(key, default)
        if value is None:
            self.fail(f"{section}.{key}", "missing")
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"{section}.{key}", f"expected an integer, got {value!r}")
            return None
        if minimum is not None and value < minimum:
            self.fail(f"{section}.{key}", f"must be >= {minimum}")
            return None
        return int(value)


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file."""
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e}", code="config_io")
    try:
        doc = tomllib.loads(raw_bytes.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as e:
        raise ValidationError(f"{path}: config syntax error: {e}", code="config_syntax")
    config = build_config(doc, base_dir=path.parent)
    import hashlib

    digest = hashlib.sha256(raw_bytes).hexdigest()
    object.__setattr__(config, "source_digest", digest)
    return config


def build_config(doc: dict, base_dir: Path | None = None) -> ScenarioConfig:
    col = _Collector()
    base_dir = Path(base_dir) if base_dir is not None else Path(".")

    seed = col.integer(doc, "", "seed", default=0, minimum=0)
    if seed is not None and seed >= 2**64:
        col.fail("seed", "must fit in 64 bits")

    # [medium]: exactly one of temperature_c / sound_speed
    medium = doc.get("medium", {})
    c = None
    has_t = "temperature_c" in medium
    has_c = "sound_speed" in medium
    if has_t == has_c:
        col.fail("medium", "set exactly one of temperature_c or sound_speed")
    elif has_c:
        c = col.number(medium, "medium", "sound_speed", minimum=1e-6)
    else:
        t = col.number(medium, "medium", "temperature_c")
        if t is not None:
            try:
                c = WaterState(temperature_c=t).sound_speed
            except ValidationError as e:
                col.fail("medium.temperature_c", str(e))

    # [geometry]
    geometry_table = doc.get("geometry", {})
    detector_offset = col.number(
        geometry_table, "geometry", "detector_offset", default=13e-3, minimum=1e-6
    )
    n_angles = col.integer(geometry_table, "geometry", "n_angles", default=360, minimum=1)
    sample_rate = col.number(geometry_table, "geometry", "sample_rate", default=60e6, minimum=1.0)
    pad_samples = col.integer(geometry_table, "geometry", "pad_samples", default=32, minimum=0)
    explicit_window = [k for k in ("t_start", "dt", "n_samples") if k in geometry_table]
    window = None
    if explicit_window and len(explicit_window) != 3:
        col.fail("geometry", "t_start, dt, n_samples must be given together")
    elif explicit_window:
        t_start = col.number(geometry_table, "geometry", "t_start")
        dt = col.number(geometry_table, "geometry", "dt", minimum=1e-12)
        n_samples = col.integer(geometry_table, "geometry", "n_samples", minimum=2)
        if None not in (t_start, dt, n_samples):
            window = TimeWindow(t_start=t_start, dt=dt, n_samples=n_samples)

    # [phantom]
    phantom = doc.get("phantom", {})
    nx = col.integer(phantom, "phantom", "grid_nx", default=201, minimum=2)
    ny = col.integer(phantom, "phantom", "grid_ny", default=201, minimum=2)
    pitch = col.number(phantom, "phantom", "grid_pitch", default=50e-6, minimum=1e-9)
    scan_radius = col.number(
        phantom,
        "phantom",
        "scan_radius",
        default=detector_offset if detector_offset else DEFAULT_SCAN_RADIUS,
        minimum=1e-9,
    )
    center_raw = phantom.get("grid_center", [0.0, 0.0])
    center = (0.0, 0.0)
    if (
        not isinstance(center_raw, list)
        or len(center_raw) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in center_raw)
    ):
        col.fail("phantom.grid_center", f"expected [x, y], got {center_raw!r}")
    else:
        center = (float(center_raw[0]), float(center_raw[1]))

    grid = None
    if None not in (nx, ny, pitch, scan_radius):
        try:
            grid = Grid2D(nx=nx, ny=ny, pitch=pitch, center=center, scan_radius=scan_radius)
        except ValidationError as e:
            col.fail("phantom.grid", str(e))

    shapes: list[ShapeSpec] = []
    for i, entry in enumerate(phantom.get("shapes", [])):
        prefix = f"phantom.shapes[{i}]"
        if not isinstance(entry, dict):
            col.fail(prefix, "expected a table")
            continue
        kind = entry.get("kind")
        dims = entry.get("dims")
        shape_center = entry.get("center", [0.0, 0.0])
        amplitude = entry.get("amplitude", 1.0)
        try:
            shapes.append(
                ShapeSpec(
                    kind=kind,
                    center=tuple(shape_center),
                    dims=tuple(dims) if isinstance(dims, list) else dims,
                    amplitude=amplitude,
                )
            )
        except (ValidationError, TypeError) as e:
            col.fail(prefix, str(e))

    bitmap = None
    if "bitmap" in phantom:
        table = phantom["bitmap"]
        if not isinstance(table, dict):
            col.fail("phantom.bitmap", "expected a table")
        else:
            bitmap_path = table.get("path")
            if not isinstance(bitmap_path, str):
                col.fail("phantom.bitmap.path", "missing or not a string")
                bitmap_path = None
            else:
                bitmap_path = str((base_dir / bitmap_path).resolve())
                if not Path(bitmap_path).is_file():
                    col.fail("phantom.bitmap.path", f"file not found: {bitmap_path}")
            bitmap = {
                "path": bitmap_path,
                "physical_width": col.number(
                    table, "phantom.bitmap", "physical_width", minimum=1e-9
                ),
                "amplitude": col.number(table, "phantom.bitmap", "amplitude", minimum=0.0),
                "white_level": col.number(table, "phantom.bitmap", "white_level", default=65535.0),
            }
        if shapes:
            col.fail("phantom", "give shapes or bitmap, not both")

    # [optics]
    optics_table = doc.get("optics", {})
    rf_rate = col.number(optics_table, "optics", "rf_rate", default=600e6, minimum=1.0)
    optics = None
    optics_kwargs = {}
    for key, attribute in (
        ("wavelength", "wavelength"),
        ("piezo_optic", "piezo_optic"),
        ("interaction_length", "interaction_length"),
        ("carrier_frequency", "carrier_frequency"),
        ("fringe_contrast", "fringe_contrast"),
        ("background", "background"),
    ):
        if key in optics_table:
            value = col.number(optics_table, "optics", key)
            if value is not None:
                optics_kwargs[attribute] = value
    try:
        optics = OpticalParams(**optics_kwargs)
    except ValidationError as e:
        col.fail("optics", str(e))

    # [noise]
    noise_table = doc.get("noise", {})
    noise = None
    try:
        noise = NoiseModel(
            phase_noise_std=col.number(noise_table, "noise", "phase_noise_std", default=0.55e-3)
            or 0.0,
            amplitude_noise_std=col.number(
                noise_table, "noise", "amplitude_noise_std", default=0.0
            )
            or 0.0,
            carrier_offset=col.number(noise_table, "noise", "carrier_offset", default=0.0) or 0.0,
            carrier_phase_drift=col.number(
                noise_table, "noise", "carrier_phase_drift", default=0.0
            )
            or 0.0,
            rng_seed=seed or 0,
        )
    except ValidationError as e:
        col.fail("noise", str(e))

    # [receiver]
    receiver_table = doc.get("receiver", {})
    receiver = None
    try:
        receiver = ReceiverConfig(
            local_oscillator_frequency=col.number(
                receiver_table,
                "receiver",
                "local_oscillator_frequency",
                default=optics.carrier_frequency if optics else 75e6,
            )
            or 75e6,
            output_rate=col.number(receiver_table, "receiver", "output_rate", default=60e6)
            or 60e6,
            lowpass_cutoff=col.number(receiver_table, "receiver", "lowpass_cutoff", default=3e6)
            or 3e6,
            filter_taps=col.integer(receiver_table, "receiver", "filter_taps", default=255) or 255,
        )
    except ValidationError as e:
        col.fail("receiver", str(e))

    # [scan]
    scan_table = doc.get("scan", {})
    shots_per_angle = col.integer(scan_table, "scan", "shots_per_angle", default=4, minimum=1)

    # [recon]
    recon_table = doc.get("recon", {})
    recon = None
    try:
        recon = ReconConfig(
            cutoff=col.number(recon_table, "recon", "cutoff", default=2e6) or 2e6,
            kernel=recon_table.get("kernel", "derivative_ubp"),
            interpolation=recon_table.get("interpolation", "linear"),
            normalization=recon_table.get("normalization", "max_abs"),
        )
    except ValidationError as e:
        col.fail("recon", str(e))

    # [metrics]
    metrics_table = doc.get("metrics", {})
    noise_source = metrics_table.get("noise_source", "capture")
    if noise_source not in NOISE_SOURCES:
        col.fail("metrics.noise_source", f"must be one of {NOISE_SOURCES}")
    noise_file = metrics_table.get("noise_file")
    if noise_source == "file":
        if not isinstance(noise_file, str):
            col.fail("metrics.noise_file", "required when noise_source = 'file'")
        else:
            noise_file = str((base_dir / noise_file).resolve())
            if not Path(noise_file).is_file():
                col.fail("metrics.noise_file", f"file not found: {noise_file}")
    cut_lines: list[CutLine] = []
    for i, entry in enumerate(metrics_table.get("cut_lines", [{"axis": "x"}, {"axis": "y"}])):
        prefix = f"metrics.cut_lines[{i}]"
        if not isinstance(entry, dict) or "axis" not in entry:
            col.fail(prefix, "expected a table with an axis key")
            continue
        try:
            cut_lines.append(
                CutLine(axis=entry["axis"], coordinate=float(entry.get("coordinate", 0.0)))
            )
        except (ValidationError, TypeError, ValueError) as e:
            col.fail(prefix, str(e))
    gates = metrics_table.get("gates", {})
    if not isinstance(gates, dict):
        col.fail("metrics.gates", "expected a table of <field>_min/<field>_max numbers")
        gates = {}
    else:
        for key, value in gates.items():
            if not (key.endswith("_min") or key.endswith("_max")):
                col.fail(f"metrics.gates.{key}", "gate keys end with _min or _max")
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                col.fail(f"metrics.gates.{key}", "gate values are numbers")
    metrics_settings = MetricsSettings(
        bandwidth=col.number(metrics_table, "metrics", "bandwidth", default=2e6, minimum=1.0)
        or 2e6,
        noise_source=noise_source if noise_source in NOISE_SOURCES else "capture",
        noise_file=noise_file if isinstance(noise_file, str) else None,
        path_length=metrics_table.get("path_length"),
        cut_lines=tuple(cut_lines),
        gates=dict(gates),
    )
    if metrics_settings.path_length is not None and (
        not isinstance(metrics_settings.path_length, (int, float))
        or metrics_settings.path_length <= 0
    ):
        col.fail("metrics.path_length", "must be a positive number")

    # assemble the scan geometry once everything it needs is known
    geometry = None
    if None not in (detector_offset, n_angles, sample_rate, pad_samples, c) and grid is not None:
        if window is None:
            window = covering_window(
                grid, detector_offset, c, sample_rate=sample_rate, pad_samples=pad_samples
            )
        try:
            geometry = ScanGeometry(
                detector_offset=detector_offset,
                angles=uniform_angles(n_angles),
                t_start=window.t_start,
                dt=window.dt,
                n_samples=window.n_samples,
            )
        except ValidationError as e:
            col.fail("geometry", str(e))

    if optics is not None and rf_rate is not None and rf_rate < 4 * optics.carrier_frequency:
        col.fail("optics.rf_rate", "must be at least 4x the carrier frequency")
    if receiver is not None and geometry is not None:
        rate = 1.0 / geometry.dt
        if abs(receiver.output_rate - rate) > 1e-6 * rate:
            col.fail(
                "receiver.output_rate",
                f"{receiver.output_rate:g} does not match the scan sample rate {rate:g}",
            )
    if receiver is not None and rf_rate is not None:
        ratio = rf_rate / receiver.output_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            col.fail("optics.rf_rate", "must be an integer multiple of receiver.output_rate")

    if col.errors:
        raise ValidationError(
            "config invalid:\n  " + "\n  ".join(col.errors), code="config_invalid"
        )

    return ScenarioConfig(
        seed=seed,
        sound_speed=c,
        grid=grid,
        shapes=tuple(shapes),
        bitmap=bitmap,
        geometry=geometry,
        optics=optics,
        rf_rate=rf_rate,
        noise=noise,
        receiver=receiver,
        shots_per_angle=shots_per_angle,
        recon=recon,
        metrics=metrics_settings,
    )
