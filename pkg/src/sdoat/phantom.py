"""Initial-pressure phantoms on a regular 2-D grid.

The imaging plane is sampled on a square-pitch grid of pixel centers. A
phantom is a list of geometric shapes rasterized in order (later shapes
overwrite earlier ones where they overlap), or a binarized bitmap imported
with a physical width. Amplitudes are initial pressure in Pa and must be
non-negative; everything outside every shape is 0.

Coordinates are meters in the plane of the scan. Grid arrays are stored
row-major with shape (ny, nx); row 0 holds the smallest y coordinate and
column 0 the smallest x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Shapes are rasterized by a pixel-center-in-shape test; boundaries count as
# inside. Dimension tuples per kind, all in meters:
#   disk      (radius,)
#   ellipse   (width, height)   full axis lengths
#   rectangle (width, height)
#   annulus   (r_inner, r_outer)
SHAPE_KINDS = ("disk", "ellipse", "rectangle", "annulus")

DEFAULT_SCAN_RADIUS = 13.0e-3  # m, rotation radius of the detector


@dataclass(frozen=True)
class Grid2D:
    """Regular pixel grid, pitch in meters, centered on ``center``.

    The physical extent nx*pitch by ny*pitch must fit inside the scan circle
    so every pixel stays reachable by the rotating detector.
    """

    nx: int
    ny: int
    pitch: float
    center: tuple[float, float] = (0.0, 0.0)
    scan_radius: float = DEFAULT_SCAN_RADIUS

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("grid needs nx >= 1 and ny >= 1", code="grid_shape")
        if self.pitch <= 0:
            raise ValidationError("grid pitch must be positive", code="grid_pitch")
        if self.scan_radius <= 0:
            raise ValidationError("scan radius must be positive", code="grid_scan_radius")
        cx, cy = self.center
        half_x = abs(cx) + self.nx * self.pitch / 2
        half_y = abs(cy) + self.ny * self.pitch / 2
        limit = self.scan_radius * (1 + 1e-12)
        if half_x > limit or half_y > limit:
            raise ValidationError(
                f"grid extent {self.nx * self.pitch:g} x {self.ny * self.pitch:g} m "
                f"does not fit inside the scan circle of radius {self.scan_radius:g} m",
                code="grid_extent",
            )

    def x_coords(self) -> np.ndarray:
        """Pixel-center x coordinates, ascending."""
        return self.center[0] + (np.arange(self.nx) - (self.nx - 1) / 2) * self.pitch

    def y_coords(self) -> np.ndarray:
        """Pixel-center y coordinates, ascending."""
        return self.center[1] + (np.arange(self.ny) - (self.ny - 1) / 2) * self.pitch

    def extent(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the physical pixel area."""
        cx, cy = self.center
        hx = self.nx * self.pitch / 2
        hy = self.ny * self.pitch / 2
        return (cx - hx, cx + hx, cy - hy, cy + hy)

    def outer_radius(self) -> float:
        """Distance from the rotation axis to the farthest pixel area corner."""
        x_min, x_max, y_min, y_max = self.extent()
        corners = np.array([[x_min, y_min], [x_min, y_max], [x_max, y_min], [x_max, y_max]])
        return float(np.max(np.hypot(corners[:, 0], corners[:, 1])))


@dataclass(frozen=True)
class ShapeSpec:
    """One geometric shape with a uniform pressure amplitude."""

    kind: str
    center: tuple[float, float]
    dims: tuple[float, ...]
    amplitude: float

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValidationError(
                f"unknown shape kind {self.kind!r}, expected one of {SHAPE_KINDS}",
                code="shape_kind",
            )
        expected = {"disk": 1, "ellipse": 2, "rectangle": 2, "annulus": 2}[self.kind]
        if len(self.dims) != expected:
            raise ValidationError(
                f"{self.kind} takes {expected} dimension(s), got {len(self.dims)}",
                code="shape_dims",
            )
        if any(not np.isfinite(d) or d <= 0 for d in self.dims):
            raise ValidationError(f"{self.kind} dimensions must be positive", code="shape_dims")
        if self.kind == "annulus" and self.dims[0] >= self.dims[1]:
            raise ValidationError(
                "annulus needs r_inner < r_outer", code="shape_dims"
            )
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValidationError("shape amplitude must be finite and >= 0", code="shape_amplitude")

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) enclosing the shape."""
        x0, y0 = self.center
        if self.kind == "disk":
            hx = hy = self.dims[0]
        elif self.kind == "annulus":
            hx = hy = self.dims[1]
        else:
            hx, hy = self.dims[0] / 2, self.dims[1] / 2
        return (x0 - hx, x0 + hx, y0 - hy, y0 + hy)


@dataclass(frozen=True)
class PressureField:
    """Rasterized initial pressure [Pa] on a grid, immutable after creation."""

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.ny, self.grid.nx):
            raise ValidationError(
                f"field shape {values.shape} does not match grid "
                f"({self.grid.ny}, {self.grid.nx})",
                code="field_shape",
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite", code="field_values")
        if np.any(values < 0):
            raise ValidationError("initial pressure must be non-negative", code="field_values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FieldStats:
    """Summary statistics of a pressure field."""

    max_pa: float
    support_area_m2: float
    centroid: tuple[float, float] | None  # None when the field is identically zero


def rasterize(shapes: list[ShapeSpec], grid: Grid2D) -> PressureField:
    """Rasterize shapes onto the grid, later shapes winning in overlaps.

    A pixel belongs to a shape when its center lies inside or on the
    boundary. Every shape must lie within the grid extent; violations are
    rejected with the offending shape index.
    """
    x_min, x_max, y_min, y_max = grid.extent()
    for index, shape in enumerate(shapes):
        bx_min, bx_max, by_min, by_max = shape.bounding_box()
        eps = 1e-12
        if bx_min < x_min - eps or bx_max > x_max + eps or by_min < y_min - eps or by_max > y_max + eps:
            raise ValidationError(
                f"shape {index} ({shape.kind}) extends outside the grid extent",
                code="shape_outside_grid",
            )
    xx, yy = np.meshgrid(grid.x_coords(), grid.y_coords())
    values = np.zeros((grid.ny, grid.nx))
    for shape in shapes:
        values[_shape_mask(shape, xx, yy)] = shape.amplitude
    return PressureField(grid=grid, values=values)


def _shape_mask(shape: ShapeSpec, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    x0, y0 = shape.center
    dx = xx - x0
    dy = yy - y0
    if shape.kind == "disk":
        return dx * dx + dy * dy <= shape.dims[0] ** 2
    if shape.kind == "ellipse":
        a = shape.dims[0] / 2
        b = shape.dims[1] / 2
        return (dx / a) ** 2 + (dy / b) ** 2 <= 1.0
    if shape.kind == "rectangle":
        return (np.abs(dx) <= shape.dims[0] / 2) & (np.abs(dy) <= shape.dims[1] / 2)
    # annulus: the hole is not part of the shape and does not overwrite
    rr = dx * dx + dy * dy
    return (rr >= shape.dims[0] ** 2) & (rr <= shape.dims[1] ** 2)


def import_bitmap(
    pixels: np.ndarray,
    white_level: float,
    physical_width: float,
    amplitude: float,
    scan_radius: float = DEFAULT_SCAN_RADIUS,
) -> PressureField:
    """Binarize a grayscale bitmap into a pressure field.

    Pixels darker than half of ``white_level`` become ``amplitude``, the rest
    0. The pitch is ``physical_width / columns`` and applies to both axes, so
    the aspect ratio of the bitmap is preserved. Bitmap row 0 is the top of
    the image and maps to the largest y coordinate.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ValidationError("bitmap must be a non-empty 2-D array", code="bitmap_shape")
    if white_level <= 0:
        raise ValidationError("white level must be positive", code="bitmap_white_level")
    if physical_width <= 0:
        raise ValidationError("physical width must be positive", code="bitmap_width")
    if not np.isfinite(amplitude) or amplitude < 0:
        raise ValidationError("amplitude must be finite and >= 0", code="bitmap_amplitude")
    rows, cols = pixels.shape
    pitch = physical_width / cols
    grid = Grid2D(nx=cols, ny=rows, pitch=pitch, scan_radius=scan_radius)
    dark = pixels < (white_level / 2)
    values = np.where(np.flipud(dark), amplitude, 0.0)
    return PressureField(grid=grid, values=values)


def field_statistics(field_: PressureField) -> FieldStats:
    """Maximum, nonzero support area, and amplitude-weighted centroid."""
    values = field_.values
    maximum = float(values.max()) if values.size else 0.0
    nonzero = values > 0
    area = float(np.count_nonzero(nonzero)) * field_.grid.pitch ** 2
    total = values.sum()
    if total == 0:
        return FieldStats(max_pa=maximum, support_area_m2=area, centroid=None)
    xx, yy = np.meshgrid(field_.grid.x_coords(), field_.grid.y_coords())
    cx = float((values * xx).sum() / total)
    cy = float((values * yy).sum() / total)
    return FieldStats(max_pa=maximum, support_area_m2=area, centroid=(cx, cy))
