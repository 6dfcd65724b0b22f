"""Width measurement, noise characterization, sensitivity arithmetic, coherence."""

import numpy as np
import pytest

from sdoat.acoustics import ScanGeometry, covering_window, forward_sinogram, uniform_angles
from sdoat.errors import ValidationError
from sdoat.metrics import (
    CutLine,
    MetricsReport,
    coherence_summary,
    extract_profile,
    fwhm,
    image_resolution_study,
    nep_and_density,
    noise_floor,
    resolution_bound,
    sensitivity_first_principles,
)
from sdoat.optics import OpticalParams, pressure_to_phase
from sdoat.phantom import Grid2D, ShapeSpec, rasterize
from sdoat.reconstruction import ReconConfig, reconstruct_pipeline

# ----------------------------------------------------------------------- fwhm


def test_fwhm_of_gaussian():
    pitch = 10e-6
    x = (np.arange(1001) - 500) * pitch
    sigma = 300e-6
    profile = np.exp(-(x**2) / (2 * sigma**2))
    widths = fwhm(profile, pitch)
    assert len(widths) == 1
    assert widths[0] == pytest.approx(2.3548 * sigma, abs=pitch)


def test_fwhm_of_top_hat_counts_plateau():
    pitch = 50e-6
    profile = np.zeros(200)
    profile[80:120] = 1.0  # 40 samples wide
    widths = fwhm(profile, pitch)
    assert len(widths) == 1
    assert widths[0] == pytest.approx(40 * pitch, abs=pitch / 100)


def test_fwhm_of_triangle():
    pitch = 20e-6
    half_base = 1e-3
    x = (np.arange(401) - 200) * pitch
    profile = np.clip(1 - np.abs(x) / half_base, 0, None)
    widths = fwhm(profile, pitch)
    assert len(widths) == 1
    assert widths[0] == pytest.approx(half_base, abs=pitch)


def test_fwhm_resolves_two_peaks():
    pitch = 10e-6
    x = (np.arange(2001) - 1000) * pitch
    profile = np.exp(-((x - 3e-3) ** 2) / (2 * (200e-6) ** 2))
    profile += np.exp(-((x + 3e-3) ** 2) / (2 * (300e-6) ** 2))
    widths = fwhm(profile, pitch)
    assert len(widths) == 2
    assert widths[0] == pytest.approx(2.3548 * 300e-6, abs=2 * pitch)
    assert widths[1] == pytest.approx(2.3548 * 200e-6, abs=2 * pitch)


def test_fwhm_is_scale_and_offset_invariant():
    pitch = 10e-6
    x = (np.arange(1001) - 500) * pitch
    profile = np.exp(-(x**2) / (2 * (250e-6) ** 2))
    base = fwhm(profile, pitch)
    assert fwhm(37.0 * profile, pitch) == base
    assert fwhm(profile + 5.0, pitch) == base


def test_fwhm_of_flat_profile_is_empty():
    assert fwhm(np.zeros(100), 1e-5) == []
    assert fwhm(np.full(100, 3.3), 1e-5) == []


def test_fwhm_validation():
    with pytest.raises(ValidationError):
        fwhm(np.zeros((10, 10)), 1e-5)
    with pytest.raises(ValidationError):
        fwhm(np.zeros(2), 1e-5)
    with pytest.raises(ValidationError):
        fwhm(np.array([0.0, np.nan, 1.0]), 1e-5)
    with pytest.raises(ValidationError):
        fwhm(np.zeros(100), -1e-5)


# ---------------------------------------------------------------- noise floor


def test_noise_floor_statistics():
    rng = np.random.default_rng(4)
    phase = rng.normal(0.0, 0.55e-3, 200_000)
    result = noise_floor(phase)
    assert result["std_mrad"] == pytest.approx(0.55, rel=0.01)
    assert abs(result["mean_mrad"]) < 0.01
    assert result["histogram_counts"].sum() == phase.size
    assert len(result["histogram_edges_mrad"]) == len(result["histogram_counts"]) + 1


def test_noise_floor_needs_enough_samples():
    with pytest.raises(ValidationError):
        noise_floor(np.zeros(999))


# ------------------------------------------------- sensitivity and resolution


def test_sensitivity_from_first_principles():
    optics = OpticalParams()
    s = sensitivity_first_principles(optics, 0.2)
    assert s == pytest.approx(0.268, rel=0.01)
    assert sensitivity_first_principles(optics, 0.4) == pytest.approx(2 * s)
    assert sensitivity_first_principles(optics, 0.0) == 0.0
    with pytest.raises(ValidationError):
        sensitivity_first_principles(optics, -0.1)


def test_nep_and_density_reference_case():
    result = nep_and_density(0.55, 0.27, 2e6)
    assert result["nep_pa"] == pytest.approx(2.04, abs=0.01)
    assert result["nep_density_mpa_rt_hz"] == pytest.approx(1.44, abs=0.01)
    # identity: nep * sensitivity returns the floor
    assert result["nep_pa"] * 0.27 == pytest.approx(0.55, rel=1e-12)


def test_nep_validation():
    with pytest.raises(ValidationError):
        nep_and_density(0.55, 0.0, 2e6)
    with pytest.raises(ValidationError):
        nep_and_density(-0.1, 0.27, 2e6)
    with pytest.raises(ValidationError):
        nep_and_density(0.55, 0.27, 0.0)


def test_resolution_bound_values():
    assert resolution_bound(1480.0, 2e6) == pytest.approx(592e-6)
    assert resolution_bound(1500.0, 2e6) == pytest.approx(600e-6)
    assert resolution_bound(1480.0, 1e6) == pytest.approx(2 * 592e-6)
    with pytest.raises(ValidationError):
        resolution_bound(-1.0, 2e6)


def test_metrics_report_enforces_nep_identity():
    kwargs = dict(
        sensitivity=0.27,
        noise_floor=0.55,
        nep_density=1.44,
        r_bw=592e-6,
        bandwidth_used=2e6,
        sound_speed_used=1480.0,
    )
    report = MetricsReport(nep=0.55 / 0.27, **kwargs)
    assert report.nep == pytest.approx(2.037, abs=0.001)
    with pytest.raises(ValidationError):
        MetricsReport(nep=1.0, **kwargs)


def test_metrics_report_coerces_width_tuples():
    report = MetricsReport(
        sensitivity=0.27,
        noise_floor=0.55,
        nep=0.55 / 0.27,
        nep_density=1.44,
        r_bw=592e-6,
        bandwidth_used=2e6,
        sound_speed_used=1480.0,
        fwhm_x=[7e-4, np.float64(8e-4)],
    )
    assert report.fwhm_x == (7e-4, 8e-4)
    assert all(isinstance(v, float) for v in report.fwhm_x)


# ------------------------------------------------------------------ coherence


def test_coherence_detects_a_residual_carrier():
    rng = np.random.default_rng(6)
    dt = 1 / 60e6
    n = 40_000
    t = np.arange(n) * dt
    offset = 1000.0
    rows = 2 * np.pi * offset * t[None, :] + rng.normal(0, 0.55e-3, (8, n))
    result = coherence_summary(rows, dt)
    assert result["slope"] == pytest.approx(2 * np.pi * offset, rel=0.01)
    assert result["flagged"]
    assert result["std"] == pytest.approx(0.55e-3, rel=0.02)


def test_coherence_stays_quiet_without_carrier():
    rng = np.random.default_rng(7)
    dt = 1 / 60e6
    rows = rng.normal(0, 0.55e-3, (8, 40_000))
    result = coherence_summary(rows, dt)
    assert not result["flagged"]
    assert abs(result["slope"]) < 5 * result["slope_sigma"]
    assert result["mean"] == pytest.approx(rows.mean())


def test_coherence_validation():
    with pytest.raises(ValidationError):
        coherence_summary(np.zeros((2, 2)), 1e-8)
    with pytest.raises(ValidationError):
        coherence_summary(np.zeros((2, 100)), -1e-8)
    with pytest.raises(ValidationError):
        coherence_summary(np.full((2, 100), np.nan), 1e-8)


# ------------------------------------------------------------------- profiles


def test_extract_profile_picks_nearest_line():
    grid = Grid2D(nx=11, ny=11, pitch=100e-6)
    values = np.arange(121, dtype=float).reshape(11, 11)
    row = extract_profile(values, grid, CutLine("x", 0.0))
    assert np.array_equal(row, values[5, :])
    nudged = extract_profile(values, grid, CutLine("x", 0.031e-3))
    assert np.array_equal(nudged, values[5, :])  # still the nearest row
    col = extract_profile(values, grid, CutLine("y", -0.1e-3))
    assert np.array_equal(col, values[:, 4])
    with pytest.raises(ValidationError):
        extract_profile(values, grid, CutLine("x", 2e-3))


def test_cut_line_validation():
    with pytest.raises(ValidationError):
        CutLine("z", 0.0)
    with pytest.raises(ValidationError):
        CutLine("x", np.inf)


def test_image_resolution_study_on_truth_itself():
    from sdoat.reconstruction import ReconImage

    grid = Grid2D(nx=101, ny=101, pitch=50e-6)
    truth = rasterize([ShapeSpec("rectangle", (0.0, 0.0), (4e-3, 1e-3), 1.0)], grid)
    image = ReconImage(grid=grid, values=truth.values)
    result = image_resolution_study(image, truth, [CutLine("x", 0.0), CutLine("y", 0.0)])
    # a 4 mm bar spans 81 pixel centers at 50 um
    assert result["fwhm_x"] == [pytest.approx(81 * grid.pitch)]
    assert result["truth_fwhm_x"] == result["fwhm_x"]
    assert result["broadening_x"] == [pytest.approx(0.0, abs=1e-12)]


def test_image_resolution_study_grid_mismatch():
    from sdoat.reconstruction import ReconImage

    grid_a = Grid2D(nx=11, ny=11, pitch=100e-6)
    grid_b = Grid2D(nx=11, ny=11, pitch=50e-6)
    truth = rasterize([ShapeSpec("disk", (0.0, 0.0), (0.2e-3,), 1.0)], grid_a)
    image = ReconImage(grid=grid_b, values=np.zeros((11, 11)))
    with pytest.raises(ValidationError):
        image_resolution_study(image, truth, [CutLine("x", 0.0)])


def test_reconstructed_widths_are_isotropic_on_average():
    # many random two-source scenes: the mean reconstructed width along x
    # stays within 15% of the mean along y
    rng = np.random.default_rng(12)
    c = 1480.0
    offset = 13e-3
    grid = Grid2D(nx=101, ny=101, pitch=80e-6)
    win = covering_window(grid, offset, c)
    geo = ScanGeometry(offset, uniform_angles(60), win.t_start, win.dt, win.n_samples)
    optics = OpticalParams()
    widths_x: list[float] = []
    widths_y: list[float] = []
    for _ in range(10):
        y0 = rng.uniform(-0.8e-3, 0.8e-3)
        x1 = rng.uniform(-2.2e-3, -1.2e-3)
        x2 = rng.uniform(1.2e-3, 2.2e-3)
        r = rng.uniform(0.4e-3, 0.6e-3)
        field = rasterize(
            [
                ShapeSpec("disk", (x1, y0), (r,), 1.0),
                ShapeSpec("disk", (x2, y0), (r,), 1.0),
            ],
            grid,
        )
        s = pressure_to_phase(forward_sinogram(field, geo, c, threads=4), optics)
        img = reconstruct_pipeline(s, optics, grid, ReconConfig(), threads=4)
        study = image_resolution_study(
            img,
            field,
            [CutLine("x", y0), CutLine("y", x1), CutLine("y", x2)],
        )
        widths_x.extend(study["fwhm_x"])
        widths_y.extend(study["fwhm_y"])
    assert len(widths_x) + len(widths_y) >= 40
    mean_x = np.mean(widths_x)
    mean_y = np.mean(widths_y)
    assert abs(mean_x - mean_y) / mean_y < 0.15
