"""Sinogram filtering, transduction inversion, and back-projection."""

import numpy as np
import pytest

from sdoat.acoustics import (
    ScanGeometry,
    Sinogram,
    covering_window,
    forward_line_signal,
    forward_sinogram,
    uniform_angles,
)
from sdoat.errors import ValidationError
from sdoat.optics import OpticalParams, pressure_to_phase
from sdoat.phantom import Grid2D, ShapeSpec, rasterize
from sdoat.reconstruction import (
    ReconConfig,
    backproject,
    denoise,
    phase_to_detector_signal,
    reconstruct_pipeline,
)

C = 1480.0
OFFSET = 13e-3


def grid121():
    return Grid2D(nx=121, ny=121, pitch=50e-6)


def make_geometry(grid, n_angles=90):
    win = covering_window(grid, OFFSET, C)
    return ScanGeometry(OFFSET, uniform_angles(n_angles), win.t_start, win.dt, win.n_samples)


def phase_sinogram(field, geo, threads=1):
    s = forward_sinogram(field, geo, C, threads=threads)
    return pressure_to_phase(s, OpticalParams())


def test_zero_sinogram_reconstructs_to_zero():
    grid = grid121()
    geo = make_geometry(grid, 8)
    s = Sinogram(
        data=np.zeros((8, geo.n_samples)), geometry=geo, stage="phase", sound_speed=C
    )
    img = reconstruct_pipeline(s, OpticalParams(), grid, ReconConfig())
    assert np.all(img.values == 0.0)
    assert img.metadata["normalization_factor"] == 1.0


def test_denoise_keeps_constant_rows():
    grid = grid121()
    geo = make_geometry(grid, 4)
    data = np.full((4, geo.n_samples), 0.125)
    s = Sinogram(data=data, geometry=geo, stage="phase", sound_speed=C)
    out = denoise(s, 2e6)
    assert np.max(np.abs(out.data - 0.125)) < 0.125 * 1e-12


def test_denoise_removes_out_of_band_tone():
    grid = grid121()
    geo = make_geometry(grid, 2)
    t = geo.times()
    data = np.vstack([np.sin(2 * np.pi * 10e6 * t), np.sin(2 * np.pi * 0.5e6 * t)])
    s = Sinogram(data=data, geometry=geo, stage="phase", sound_speed=C)
    out = denoise(s, 2e6)
    mid = slice(150, -150)
    assert np.max(np.abs(out.data[0][mid])) < 1e-3  # 10 MHz is far in the stopband
    assert np.max(np.abs(out.data[1][mid] - data[1][mid])) < 0.01  # 0.5 MHz passes


def test_denoise_rejects_cutoff_at_nyquist():
    grid = grid121()
    geo = make_geometry(grid, 2)
    s = Sinogram(data=np.zeros((2, geo.n_samples)), geometry=geo, stage="phase", sound_speed=C)
    with pytest.raises(ValidationError):
        denoise(s, 30e6)


def test_transduction_inversion_round_trip():
    grid = grid121()
    geo = make_geometry(grid, 4)
    field = rasterize([ShapeSpec("disk", (1e-3, 0.0), (0.6e-3,), 1.0)], grid)
    s = forward_sinogram(field, geo, C)
    optics = OpticalParams()
    back = phase_to_detector_signal(pressure_to_phase(s, optics), optics)
    scale = np.max(np.abs(s.data))
    assert np.max(np.abs(back.data - s.data)) < 1e-12 * scale
    assert back.stage == "line_pressure"


def test_stage_checks():
    grid = grid121()
    geo = make_geometry(grid, 4)
    pressure = Sinogram(
        data=np.zeros((4, geo.n_samples)), geometry=geo, stage="line_pressure", sound_speed=C
    )
    phase = Sinogram(
        data=np.zeros((4, geo.n_samples)), geometry=geo, stage="phase", sound_speed=C
    )
    with pytest.raises(ValidationError):
        reconstruct_pipeline(pressure, OpticalParams(), grid, ReconConfig())
    with pytest.raises(ValidationError):
        phase_to_detector_signal(pressure, OpticalParams())
    with pytest.raises(ValidationError):
        backproject(phase, grid, ReconConfig())


def test_backprojection_is_linear_in_the_sinogram():
    grid = grid121()
    geo = make_geometry(grid, 16)
    fa = rasterize([ShapeSpec("disk", (1.5e-3, 0.0), (0.5e-3,), 1.0)], grid)
    fb = rasterize([ShapeSpec("disk", (-1e-3, 0.8e-3), (0.4e-3,), 2.0)], grid)
    sa = forward_sinogram(fa, geo, C)
    sb = forward_sinogram(fb, geo, C)
    s_sum = Sinogram(
        data=sa.data + sb.data, geometry=geo, stage="line_pressure", sound_speed=C
    )
    cfg = ReconConfig(normalization="none")
    ia = backproject(sa, grid, cfg).values
    ib = backproject(sb, grid, cfg).values
    iab = backproject(s_sum, grid, cfg).values
    assert np.linalg.norm(iab - (ia + ib)) / np.linalg.norm(iab) < 1e-10


def test_reconstruction_peaks_at_the_source():
    grid = grid121()
    geo = make_geometry(grid)
    field = rasterize([ShapeSpec("disk", (2e-3, 0.0), (0.5e-3,), 1.0)], grid)
    img = reconstruct_pipeline(phase_sinogram(field, geo), OpticalParams(), grid, ReconConfig())
    iy, ix = np.unravel_index(np.argmax(img.values), img.values.shape)
    x_peak = grid.x_coords()[ix]
    y_peak = grid.y_coords()[iy]
    assert abs(x_peak - 2e-3) <= 1.5 * grid.pitch
    assert abs(y_peak - 0.0) <= 1.5 * grid.pitch


def test_two_sources_are_resolved():
    grid = grid121()
    geo = make_geometry(grid)
    field = rasterize(
        [
            ShapeSpec("disk", (-1.5e-3, 0.0), (0.5e-3,), 1.0),
            ShapeSpec("disk", (1.5e-3, 0.0), (0.5e-3,), 1.0),
        ],
        grid,
    )
    img = reconstruct_pipeline(phase_sinogram(field, geo), OpticalParams(), grid, ReconConfig())
    row = img.values[grid.ny // 2]
    xs = grid.x_coords()
    left_peak = row[np.abs(xs + 1.5e-3) < 0.6e-3].max()
    right_peak = row[np.abs(xs - 1.5e-3) < 0.6e-3].max()
    valley = row[np.abs(xs) < 0.6e-3].max()
    assert valley < 0.5 * min(left_peak, right_peak)


def test_symmetric_sinogram_gives_rotationally_symmetric_image():
    from scipy.ndimage import map_coordinates

    grid = grid121()
    win = covering_window(grid, OFFSET, C)
    geo = ScanGeometry(OFFSET, uniform_angles(360), win.t_start, win.dt, win.n_samples)
    field = rasterize([ShapeSpec("disk", (0.0, 0.0), (0.8e-3,), 1.0)], grid)
    row = forward_line_signal(field, (OFFSET, 0.0), C, win)
    s = Sinogram(
        data=np.tile(row, (360, 1)), geometry=geo, stage="line_pressure", sound_speed=C
    )
    img = backproject(denoise(s, 2e6), grid, ReconConfig(), threads=4)
    v = img.values
    peak = np.max(np.abs(v))
    for r in np.arange(grid.pitch, 2.0e-3, grid.pitch):
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        xs = r * np.cos(theta) / grid.pitch + (grid.nx - 1) / 2
        ys = r * np.sin(theta) / grid.pitch + (grid.ny - 1) / 2
        ring = map_coordinates(v, [ys, xs], order=1)
        assert np.std(ring) <= 0.02 * peak


def test_dropping_one_of_360_angles_changes_little():
    # removing one view perturbs the image by about 1.3% here; the missing
    # streak is the price of the derivative kernel's long-range term
    grid = grid121()
    win = covering_window(grid, OFFSET, C)
    geo = ScanGeometry(OFFSET, uniform_angles(360), win.t_start, win.dt, win.n_samples)
    field = rasterize([ShapeSpec("disk", (0.0, 0.0), (0.8e-3,), 1.0)], grid)
    row = forward_line_signal(field, (OFFSET, 0.0), C, win)
    s = Sinogram(
        data=np.tile(row, (360, 1)), geometry=geo, stage="line_pressure", sound_speed=C
    )
    sf = denoise(s, 2e6)
    full = backproject(sf, grid, ReconConfig(), threads=4).values
    geo359 = ScanGeometry(OFFSET, geo.angles[:-1], win.t_start, win.dt, win.n_samples)
    s359 = Sinogram(data=sf.data[:-1], geometry=geo359, stage="line_pressure", sound_speed=C)
    partial = backproject(s359, grid, ReconConfig(), threads=4).values
    assert np.linalg.norm(partial - full) / np.linalg.norm(full) < 0.02


def test_quarter_turn_of_the_scene_rotates_the_image():
    grid = grid121()
    geo = make_geometry(grid, 360)
    f1 = rasterize([ShapeSpec("disk", (1.5e-3, 0.0), (0.6e-3,), 1.0)], grid)
    f2 = rasterize([ShapeSpec("disk", (0.0, 1.5e-3), (0.6e-3,), 1.0)], grid)
    i1 = backproject(forward_sinogram(f1, geo, C, threads=4), grid, ReconConfig()).values
    i2 = backproject(forward_sinogram(f2, geo, C, threads=4), grid, ReconConfig()).values
    # +90 degrees in (x, y) is rot90 with k=-1 in row-major (y, x) storage
    assert np.linalg.norm(i2 - np.rot90(i1, k=-1)) / np.linalg.norm(i2) < 1e-10


def test_delay_and_sum_kernel_also_localizes():
    grid = grid121()
    geo = make_geometry(grid)
    field = rasterize([ShapeSpec("disk", (2e-3, 0.0), (0.5e-3,), 1.0)], grid)
    cfg = ReconConfig(kernel="delay_and_sum")
    img = reconstruct_pipeline(phase_sinogram(field, geo), OpticalParams(), grid, cfg)
    iy, ix = np.unravel_index(np.argmax(img.values), img.values.shape)
    assert abs(grid.x_coords()[ix] - 2e-3) <= 2 * grid.pitch
    assert abs(grid.y_coords()[iy]) <= 2 * grid.pitch


def test_truncated_window_counts_coverage_misses():
    grid = grid121()
    win = covering_window(grid, OFFSET, C)
    geo_full = ScanGeometry(OFFSET, uniform_angles(8), win.t_start, win.dt, win.n_samples)
    field = rasterize([ShapeSpec("disk", (0.0, 0.0), (0.8e-3,), 1.0)], grid)
    s_full = forward_sinogram(field, geo_full, C)
    cfg = ReconConfig(normalization="none")
    img_full = backproject(s_full, grid, cfg)
    assert img_full.metadata["coverage_warnings"] == 0

    n_cut = int(win.n_samples * 0.7)
    geo_cut = ScanGeometry(OFFSET, uniform_angles(8), win.t_start, win.dt, n_cut)
    s_cut = Sinogram(
        data=s_full.data[:, :n_cut], geometry=geo_cut, stage="line_pressure", sound_speed=C
    )
    img_cut = backproject(s_cut, grid, cfg)
    assert img_cut.metadata["coverage_warnings"] > 0
    # pixels whose arrivals all fit in the shortened window are unaffected
    center = (slice(40, 81), slice(40, 81))
    peak = np.max(np.abs(img_full.values[center]))
    assert np.max(np.abs(img_cut.values[center] - img_full.values[center])) < 1e-9 * peak


def test_max_abs_normalization_and_metadata():
    grid = grid121()
    geo = make_geometry(grid, 16)
    field = rasterize([ShapeSpec("disk", (1e-3, 0.0), (0.6e-3,), 3.0)], grid)
    s = forward_sinogram(field, geo, C)
    normed = backproject(s, grid, ReconConfig())
    raw = backproject(s, grid, ReconConfig(normalization="none"))
    assert np.max(np.abs(normed.values)) == pytest.approx(1.0)
    factor = normed.metadata["normalization_factor"]
    assert factor == pytest.approx(np.max(np.abs(raw.values)))
    assert np.allclose(normed.values * factor, raw.values)
    assert normed.metadata["n_angles"] == 16


def test_backprojection_is_thread_deterministic():
    grid = grid121()
    geo = make_geometry(grid, 48)
    field = rasterize([ShapeSpec("disk", (1e-3, -0.7e-3), (0.6e-3,), 1.0)], grid)
    s = forward_sinogram(field, geo, C, threads=4)
    i1 = backproject(s, grid, ReconConfig(), threads=1)
    i4 = backproject(s, grid, ReconConfig(), threads=4)
    assert np.array_equal(i1.values, i4.values)


def test_recon_config_validation():
    with pytest.raises(ValidationError):
        ReconConfig(cutoff=-1.0)
    with pytest.raises(ValidationError):
        ReconConfig(kernel="fourier")
    with pytest.raises(ValidationError):
        ReconConfig(interpolation="cubic")
    with pytest.raises(ValidationError):
        ReconConfig(normalization="l2")
