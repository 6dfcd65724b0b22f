"""Back-projection image formation from phase sinograms.

The pipeline mirrors the measurement chain in reverse: de-noise the phase
rows with a zero-phase low-pass (the deliberate band-limiting step), divide
by the transduction constant to get line-integrated pressure, then back
project: every pixel accumulates, over all angles, the trace value at its
time of flight tau = |r - d_i| / c.

Two kernels are provided. The derivative kernel b(t) = g(t) - t*dg/dt is
the standard weighting for tomographic projections from point-like records
of a diverging wave; plain delay-and-sum b(t) = g(t) serves as a baseline
for comparison. Angle weights are uniform (2*pi / n_angles).
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acoustics import STAGE_LINE_PRESSURE, STAGE_PHASE, Sinogram
from .errors import ValidationError
from .filters import apply_zero_phase, design_lowpass
from .optics import OpticalParams
from .phantom import Grid2D

KERNEL_DERIVATIVE_UBP = "derivative_ubp"
KERNEL_DELAY_AND_SUM = "delay_and_sum"
_KERNELS = (KERNEL_DERIVATIVE_UBP, KERNEL_DELAY_AND_SUM)

NORMALIZATION_MAX_ABS = "max_abs"
NORMALIZATION_NONE = "none"
_NORMALIZATIONS = (NORMALIZATION_MAX_ABS, NORMALIZATION_NONE)

DENOISE_TAPS = 255

# Angles are accumulated in fixed blocks of this size; the block partition is
# independent of the thread count, so image bits never depend on it.
_ANGLE_BLOCK = 16


@dataclass(frozen=True)
class ReconConfig:
    """Reconstruction settings."""

    cutoff: float = 2e6
    kernel: str = KERNEL_DERIVATIVE_UBP
    interpolation: str = "linear"
    normalization: str = NORMALIZATION_MAX_ABS

    def __post_init__(self):
        if not np.isfinite(self.cutoff) or self.cutoff <= 0:
            raise ValidationError("cutoff must be positive", code="recon_config")
        if self.kernel not in _KERNELS:
            raise ValidationError(
                f"kernel must be one of {_KERNELS}, got {self.kernel!r}", code="recon_config"
            )
        if self.interpolation != "linear":
            raise ValidationError("interpolation must be 'linear'", code="recon_config")
        if self.normalization not in _NORMALIZATIONS:
            raise ValidationError(
                f"normalization must be one of {_NORMALIZATIONS}, got {self.normalization!r}",
                code="recon_config",
            )


@dataclass(frozen=True)
class ReconImage:
    """Reconstructed relative absorbed-energy image on a grid."""

    grid: Grid2D
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.ny, self.grid.nx):
            raise ValidationError(
                f"image shape {values.shape} does not match grid "
                f"({self.grid.ny}, {self.grid.nx})",
                code="image_shape",
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("image values must be finite", code="finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metadata", dict(self.metadata))


def geometry_digest(s: Sinogram) -> str:
    """Short stable digest of the scan geometry, for image provenance."""
    g = s.geometry
    h = hashlib.sha256()
    h.update(np.float64(g.detector_offset).tobytes())
    h.update(np.float64(g.t_start).tobytes())
    h.update(np.float64(g.dt).tobytes())
    h.update(np.int64(g.n_samples).tobytes())
    h.update(np.asarray(g.angles, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def denoise(s: Sinogram, cutoff: float) -> Sinogram:
    """Low-pass every row with the zero-phase FIR; stage is unchanged.

    Rows are extended by holding their edge values for half the kernel before
    the centered convolution, so constant rows pass through unchanged and the
    window ends see no zero-padding transient.
    """
    sample_rate = 1.0 / s.geometry.dt
    if cutoff >= sample_rate / 2:
        raise ValidationError(
            f"cutoff {cutoff:g} must stay below the sinogram Nyquist {sample_rate / 2:g}",
            code="cutoff",
        )
    taps = design_lowpass(DENOISE_TAPS, cutoff, sample_rate)
    half = taps.size // 2
    data = np.empty_like(s.data)
    for i in range(s.data.shape[0]):
        row = s.data[i]
        padded = np.concatenate([np.full(half, row[0]), row, np.full(half, row[-1])])
        data[i] = np.convolve(padded, taps, mode="valid")
    return Sinogram(
        data=data,
        geometry=s.geometry,
        stage=s.stage,
        sound_speed=s.sound_speed,
        provenance=s.provenance + f" | denoise(cutoff={cutoff:g})",
    )


def phase_to_detector_signal(s: Sinogram, optics: OpticalParams) -> Sinogram:
    """Invert the transduction: phase rows [rad] back to pressure [Pa*m]."""
    if s.stage != STAGE_PHASE:
        raise ValidationError(f"expected a {STAGE_PHASE} sinogram, got {s.stage}", code="stage")
    return Sinogram(
        data=s.data / optics.phase_per_pressure_path,
        geometry=s.geometry,
        stage=STAGE_LINE_PRESSURE,
        sound_speed=s.sound_speed,
        provenance=s.provenance + " | phase_to_detector_signal",
    )


def _project_block(
    b_rows: np.ndarray,
    times: np.ndarray,
    positions: np.ndarray,
    angle_indices: range,
    px: np.ndarray,
    py: np.ndarray,
    c: float,
    weight: float,
) -> tuple[np.ndarray, int]:
    """Sequentially accumulate one fixed block of angles."""
    acc = np.zeros(px.size)
    t_first = times[0]
    t_last = times[-1]
    misses = 0
    for i in angle_indices:
        tau = np.hypot(px - positions[i, 0], py - positions[i, 1]) / c
        inside = (tau >= t_first) & (tau <= t_last)
        misses += int(px.size - np.count_nonzero(inside))
        contribution = np.interp(tau, times, b_rows[i], left=0.0, right=0.0)
        contribution[~inside] = 0.0
        acc += weight * contribution
    return acc, misses


def backproject(
    s: Sinogram,
    grid: Grid2D,
    config: ReconConfig,
    threads: int = 1,
) -> ReconImage:
    """Back-project a line-pressure sinogram onto the grid.

    Pixels whose time of flight falls outside the recorded window receive a
    zero contribution from that angle; the count of such misses is reported
    in metadata["coverage_warnings"] rather than raised, so a truncated
    recording still reconstructs what it covered. The angle accumulation
    order is fixed in blocks, so the result is bit-identical for any thread
    count.
    """
    if s.stage != STAGE_LINE_PRESSURE:
        raise ValidationError(
            f"expected a {STAGE_LINE_PRESSURE} sinogram, got {s.stage}", code="stage"
        )
    if threads < 1:
        raise ValidationError("threads must be >= 1", code="threads")
    geometry = s.geometry
    times = geometry.times()
    if config.kernel == KERNEL_DERIVATIVE_UBP:
        b_rows = s.data - times[None, :] * np.gradient(s.data, geometry.dt, axis=1)
    else:
        b_rows = s.data
    positions = geometry.detector_positions()
    xs = grid.x_coords()
    ys = grid.y_coords()
    px = np.tile(xs, grid.ny)
    py = np.repeat(ys, grid.nx)
    weight = 2 * np.pi / geometry.n_angles

    blocks = [
        range(start, min(start + _ANGLE_BLOCK, geometry.n_angles))
        for start in range(0, geometry.n_angles, _ANGLE_BLOCK)
    ]
    args = (b_rows, times, positions)
    flat = np.zeros(px.size)
    misses = 0
    if threads == 1:
        for block in blocks:
            acc, m = _project_block(*args, block, px, py, s.sound_speed, weight)
            flat += acc
            misses += m
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_project_block, *args, block, px, py, s.sound_speed, weight)
                for block in blocks
            ]
            # in-order reduction keeps the floating-point association fixed
            for future in futures:
                acc, m = future.result()
                flat += acc
                misses += m

    values = flat.reshape(grid.ny, grid.nx)
    factor = 1.0
    if config.normalization == NORMALIZATION_MAX_ABS:
        peak = float(np.abs(values).max())
        if peak > 0:
            factor = peak
            values = values / peak
    metadata = {
        "sound_speed": s.sound_speed,
        "cutoff": config.cutoff,
        "kernel": config.kernel,
        "normalization": config.normalization,
        "normalization_factor": factor,
        "coverage_warnings": misses,
        "geometry_digest": geometry_digest(s),
        "n_angles": geometry.n_angles,
        "detector_offset": geometry.detector_offset,
    }
    return ReconImage(grid=grid, values=values, metadata=metadata)


def reconstruct_pipeline(
    s: Sinogram,
    optics: OpticalParams,
    grid: Grid2D,
    config: ReconConfig,
    threads: int = 1,
) -> ReconImage:
    """denoise -> phase_to_detector_signal -> backproject, in that order."""
    if s.stage != STAGE_PHASE:
        raise ValidationError(f"expected a {STAGE_PHASE} sinogram, got {s.stage}", code="stage")
    filtered = denoise(s, config.cutoff)
    detector = phase_to_detector_signal(filtered, optics)
    return backproject(detector, grid, config, threads=threads)
