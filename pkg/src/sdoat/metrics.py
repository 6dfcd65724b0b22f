"""Quantitative characterization: resolution, noise floor, sensitivity, NEP.

All pressure-domain figures hang off one constant: the phase produced per
pascal. A pressure p acting over an optical path L produces a phase of
(2*pi/lambda)*(dn/dp)*L*p, so the sensitivity in mrad/Pa is that expression
times 1000. The noise-equivalent pressure is the phase noise floor divided
by the sensitivity, and its spectral density divides out the square root of
the bandwidth. The bandwidth-limited resolution follows the usual
pulse-width argument R = 0.8*c/BW.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import ValidationError
from .phantom import PressureField
from .reconstruction import ReconImage


@dataclass(frozen=True)
class CutLine:
    """A profile extraction line: axis 'x' runs along x at fixed y [m]."""

    axis: str
    coordinate: float = 0.0

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValidationError("cut axis must be 'x' or 'y'", code="cut_line")
        if not np.isfinite(self.coordinate):
            raise ValidationError("cut coordinate must be finite", code="cut_line")


@dataclass(frozen=True)
class MetricsReport:
    """Characterization summary; nep = noise_floor / sensitivity always."""

    sensitivity: float  # mrad/Pa
    noise_floor: float  # mrad
    nep: float  # Pa
    nep_density: float  # mPa/sqrt(Hz)
    r_bw: float  # m
    bandwidth_used: float  # Hz
    sound_speed_used: float  # m/s
    noise_mean: float = 0.0  # mrad
    fwhm_x: tuple = ()
    fwhm_y: tuple = ()
    truth_fwhm_x: tuple = ()
    truth_fwhm_y: tuple = ()
    coherence_slope: float = 0.0  # rad/s
    coherence_slope_sigma: float = 0.0  # rad/s, statistical error of the slope
    coherence_flagged: bool = False

    def __post_init__(self):
        for name in (
            "sensitivity",
            "noise_floor",
            "nep",
            "nep_density",
            "r_bw",
            "bandwidth_used",
            "sound_speed_used",
            "noise_mean",
            "coherence_slope",
            "coherence_slope_sigma",
        ):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "coherence_flagged", bool(self.coherence_flagged))
        for name in ("sensitivity", "bandwidth_used", "sound_speed_used", "r_bw"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be positive", code="report")
        for name in ("noise_floor", "nep", "nep_density", "coherence_slope_sigma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be >= 0", code="report")
        if self.sensitivity > 0:
            expected = self.noise_floor / self.sensitivity
            if not np.isclose(self.nep, expected, rtol=1e-9, atol=0):
                raise ValidationError(
                    "nep must equal noise_floor / sensitivity", code="report"
                )
        object.__setattr__(self, "fwhm_x", tuple(float(v) for v in self.fwhm_x))
        object.__setattr__(self, "fwhm_y", tuple(float(v) for v in self.fwhm_y))
        object.__setattr__(self, "truth_fwhm_x", tuple(float(v) for v in self.truth_fwhm_x))
        object.__setattr__(self, "truth_fwhm_y", tuple(float(v) for v in self.truth_fwhm_y))


def fwhm(profile: np.ndarray, pitch: float) -> list[float]:
    """Full width at half maximum [m] of every qualifying peak in a profile.

    The profile minimum is subtracted first (images carry low-level haze).
    Peaks at or above 50% of the global maximum are measured by locating the
    half-maximum crossings on both flanks with linear interpolation; peaks
    that lack a crossing on either side are skipped.
    """
    profile = np.asarray(profile, dtype=float)
    if profile.ndim != 1 or profile.size < 3:
        raise ValidationError("profile must be 1-D with at least 3 samples", code="profile")
    if not np.all(np.isfinite(profile)):
        raise ValidationError("profile must be finite", code="profile")
    if pitch <= 0:
        raise ValidationError("pitch must be positive", code="profile")
    values = profile - profile.min()
    top = values.max()
    if top == 0:
        return []
    indices, _ = find_peaks(values, height=0.5 * top, plateau_size=1)
    widths: list[float] = []
    for peak_index in indices:
        half = values[peak_index] / 2.0
        left = _cross_below(values, peak_index, half, step=-1)
        right = _cross_below(values, peak_index, half, step=+1)
        if left is None or right is None:
            continue
        widths.append((right - left) * pitch)
    # the array edges can themselves be maxima (monotone flanks); cover the
    # case of a single global plateau touching the boundary with no interior
    # peak sample
    if not widths and not indices.size:
        peak_index = int(np.argmax(values))
        left = _cross_below(values, peak_index, values[peak_index] / 2.0, step=-1)
        right = _cross_below(values, peak_index, values[peak_index] / 2.0, step=+1)
        if left is not None and right is not None:
            widths.append((right - left) * pitch)
    return widths


def _cross_below(values: np.ndarray, start: int, level: float, step: int) -> float | None:
    """Fractional index where values first cross below level, scanning from start."""
    i = start
    while 0 <= i + step < values.size:
        j = i + step
        if values[j] < level:
            # linear interpolation between i and j
            span = values[i] - values[j]
            frac = (values[i] - level) / span if span > 0 else 0.0
            return i + step * frac
        i = j
    return None


def noise_floor(phase: np.ndarray, bins: int = 100) -> dict:
    """Gaussian fit (sample mean/std) of a phase series, reported in mrad.

    The returned histogram (counts, edges in mrad) supports visual audit of
    the Gaussian shape.
    """
    phase = np.asarray(phase, dtype=float)
    if phase.size < 1000:
        raise ValidationError("noise_floor needs at least 1e3 samples", code="samples")
    if not np.all(np.isfinite(phase)):
        raise ValidationError("phase series must be finite", code="finite")
    mrad = phase * 1e3
    counts, edges = np.histogram(mrad, bins=bins)
    return {
        "std_mrad": float(mrad.std()),
        "mean_mrad": float(mrad.mean()),
        "histogram_counts": counts,
        "histogram_edges_mrad": edges,
    }


def sensitivity_first_principles(optics, path_length: float) -> float:
    """Phase sensitivity [mrad/Pa] of a pressure acting over path_length."""
    if path_length < 0 or not np.isfinite(path_length):
        raise ValidationError("path_length must be >= 0", code="path_length")
    return 1e3 * (2 * np.pi / optics.wavelength) * optics.piezo_optic * path_length


def nep_and_density(noise_floor_mrad: float, sensitivity_mrad_per_pa: float, bandwidth: float) -> dict:
    """Noise-equivalent pressure [Pa] and its density [mPa/sqrt(Hz)]."""
    if sensitivity_mrad_per_pa <= 0 or not np.isfinite(sensitivity_mrad_per_pa):
        raise ValidationError("sensitivity must be positive", code="nep")
    if noise_floor_mrad < 0 or not np.isfinite(noise_floor_mrad):
        raise ValidationError("noise floor must be >= 0", code="nep")
    if bandwidth <= 0 or not np.isfinite(bandwidth):
        raise ValidationError("bandwidth must be positive", code="nep")
    nep = noise_floor_mrad / sensitivity_mrad_per_pa
    return {"nep_pa": nep, "nep_density_mpa_rt_hz": 1e3 * nep / np.sqrt(bandwidth)}


def coherence_summary(rows: np.ndarray, dt: float, flag_factor: float = 100.0) -> dict:
    """Detect a residual carrier in demodulated phase rows.

    A constant offset between the optical carrier and the receiver's local
    oscillator turns every demodulated row into a linear ramp of slope
    2*pi*offset rad/s. Each row gets a least-squares line fit; the mean slope
    across rows is the estimate, and its statistical error follows from the
    detrended sample noise (Var(slope) = sigma^2 / sum((t - mean(t))^2) per
    row, divided by the row count). The run is flagged when the estimate
    exceeds flag_factor times that error.

    Returns slope [rad/s], slope_sigma [rad/s], detrended std [rad], raw
    mean [rad], and the flag.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.ndim != 2 or rows.shape[1] < 3:
        raise ValidationError("need 2-D rows with at least 3 samples each", code="coherence")
    if not np.all(np.isfinite(rows)):
        raise ValidationError("phase rows must be finite", code="coherence")
    if dt <= 0 or not np.isfinite(dt):
        raise ValidationError("dt must be positive", code="coherence")
    n_rows, n = rows.shape
    t = (np.arange(n) - (n - 1) / 2.0) * dt  # centered: slope decouples from mean
    denom = float(np.dot(t, t))
    slopes = rows @ t / denom
    means = rows.mean(axis=1)
    detrended = rows - means[:, None] - slopes[:, None] * t[None, :]
    std = float(detrended.std())
    slope = float(slopes.mean())
    slope_sigma = std / np.sqrt(denom * n_rows)
    return {
        "slope": slope,
        "slope_sigma": float(slope_sigma),
        "std": std,
        "mean": float(rows.mean()),
        "flagged": bool(abs(slope) >= flag_factor * slope_sigma) if slope_sigma > 0 else False,
    }


def resolution_bound(c: float, bandwidth: float) -> float:
    """Bandwidth-limited resolution R = 0.8 * c / BW [m]."""
    if c <= 0 or bandwidth <= 0 or not (np.isfinite(c) and np.isfinite(bandwidth)):
        raise ValidationError("c and bandwidth must be positive", code="resolution")
    return 0.8 * c / bandwidth


def extract_profile(values: np.ndarray, grid, line: CutLine) -> np.ndarray:
    """Row or column of a gridded array along a cut line."""
    if line.axis == "x":
        coords = grid.y_coords()
    else:
        coords = grid.x_coords()
    if not (coords[0] - grid.pitch / 2 <= line.coordinate <= coords[-1] + grid.pitch / 2):
        raise ValidationError(
            f"cut line at {line.coordinate:g} m lies outside the grid", code="cut_line"
        )
    index = int(np.argmin(np.abs(coords - line.coordinate)))
    return values[index, :] if line.axis == "x" else values[:, index]


def image_resolution_study(
    image: ReconImage,
    truth: PressureField,
    cut_lines: list[CutLine],
) -> dict:
    """FWHM lists per axis for the image and the truth along the cut lines."""
    if image.grid != truth.grid:
        raise ValidationError("image and truth must share a grid", code="grid_mismatch")
    pitch = image.grid.pitch
    result: dict = {"fwhm_x": [], "fwhm_y": [], "truth_fwhm_x": [], "truth_fwhm_y": []}
    for line in cut_lines:
        image_widths = fwhm(extract_profile(image.values, image.grid, line), pitch)
        truth_widths = fwhm(extract_profile(truth.values, truth.grid, line), pitch)
        result[f"fwhm_{line.axis}"].extend(image_widths)
        result[f"truth_fwhm_{line.axis}"].extend(truth_widths)
    for axis in "xy":
        recon = result[f"fwhm_{axis}"]
        exact = result[f"truth_fwhm_{axis}"]
        if recon and exact and len(recon) == len(exact):
            result[f"broadening_{axis}"] = [r - t for r, t in zip(recon, exact)]
    return result
