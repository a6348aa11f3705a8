"""Parallel-beam scan geometry, projection matrix, phantoms, and noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import Image, SparseMatrix, matvec

# direction components smaller than this are treated as axis-parallel;
# they only arise from sin/cos roundoff at the axis angles themselves
_PARALLEL_EPS = 1e-12


@dataclass(frozen=True)
class ScanGeometry:
    """Equally spaced view angles in [0, pi) with a centered linear detector."""

    n_angles: int
    n_rays: int
    ray_spacing: float
    grid_rows: int
    grid_cols: int
    pixel_size: float

    def __post_init__(self):
        for name in ("n_angles", "n_rays", "grid_rows", "grid_cols"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.ray_spacing <= 0 or self.pixel_size <= 0:
            raise ValueError("ray_spacing and pixel_size must be positive")

    @property
    def n_measurements(self) -> int:
        return self.n_angles * self.n_rays

    @property
    def n_pixels(self) -> int:
        return self.grid_rows * self.grid_cols

    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    def ray_offsets(self) -> np.ndarray:
        """Signed detector offsets, symmetric about the grid center."""
        return (np.arange(self.n_rays) - (self.n_rays - 1) / 2.0) * self.ray_spacing


def desk_geometry() -> ScanGeometry:
    """Small default scan: 64x64 grid, 90 views, 95 rays, ~18.3 cm field."""
    spacing = 0.0752 * 243.0 / 64.0
    return ScanGeometry(
        n_angles=90,
        n_rays=95,
        ray_spacing=spacing,
        grid_rows=64,
        grid_cols=64,
        pixel_size=spacing,
    )


@dataclass(frozen=True)
class EllipseSpec:
    """One additive ellipse: center (cm), semi-axes (cm), rotation (rad), value."""

    center_x: float
    center_y: float
    semi_axis_a: float
    semi_axis_b: float
    rotation: float
    delta_value: float

    def __post_init__(self):
        if self.semi_axis_a <= 0 or self.semi_axis_b <= 0:
            raise ValueError("ellipse semi-axes must be positive")


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Measured or ideal ray integrals, angle-major (rays contiguous per angle)."""

    data: np.ndarray
    geometry: ScanGeometry

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 1 or data.size != self.geometry.n_measurements:
            raise ValueError(
                f"sinogram has {data.size} values, geometry expects "
                f"{self.geometry.n_measurements}"
            )


def pixel_centers(rows: int, cols: int, pixel_size: float) -> tuple[np.ndarray, np.ndarray]:
    """Physical (x, y) of each pixel center, flat and aligned with Image data.

    x grows with the column index, y grows upward, so image row 0 is the
    top of the grid; the grid is centered on the origin.
    """
    half_w = cols * pixel_size / 2.0
    half_h = rows * pixel_size / 2.0
    xs = -half_w + (np.arange(cols) + 0.5) * pixel_size
    ys = half_h - (np.arange(rows) + 0.5) * pixel_size
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel(), gy.ravel()


def _ray_row(ox, oy, dx, dy, geom: ScanGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Exact pixel intersection lengths for one ray, as (flat indices, lengths).

    The ray is the line (ox, oy) + s*(dx, dy) with a unit direction; chord
    lengths are therefore in physical units.  Rays missing the grid yield
    an empty row.  A ray running exactly along an interior pixel boundary
    is assigned to the pixel on the positive side of that boundary.
    """
    w = geom.pixel_size
    half_w = geom.grid_cols * w / 2.0
    half_h = geom.grid_rows * w / 2.0

    s_lo, s_hi = -np.inf, np.inf
    for origin, direction, lo, hi in ((ox, dx, -half_w, half_w), (oy, dy, -half_h, half_h)):
        if abs(direction) <= _PARALLEL_EPS:
            if not lo < origin < hi:
                return np.zeros(0, np.int64), np.zeros(0)
        else:
            s0 = (lo - origin) / direction
            s1 = (hi - origin) / direction
            if s0 > s1:
                s0, s1 = s1, s0
            s_lo = max(s_lo, s0)
            s_hi = min(s_hi, s1)
    if not s_lo < s_hi:
        return np.zeros(0, np.int64), np.zeros(0)

    cuts = [np.array([s_lo, s_hi])]
    if abs(dx) > _PARALLEL_EPS:
        s = (-half_w + w * np.arange(geom.grid_cols + 1) - ox) / dx
        cuts.append(s[(s > s_lo) & (s < s_hi)])
    if abs(dy) > _PARALLEL_EPS:
        s = (-half_h + w * np.arange(geom.grid_rows + 1) - oy) / dy
        cuts.append(s[(s > s_lo) & (s < s_hi)])
    s = np.unique(np.concatenate(cuts))
    if s.size < 2:
        return np.zeros(0, np.int64), np.zeros(0)

    lengths = np.diff(s)
    mids = 0.5 * (s[:-1] + s[1:])
    mx = ox + mids * dx
    my = oy + mids * dy
    ci = np.floor((mx + half_w) / w).astype(np.int64)
    ri = np.floor((my + half_h) / w).astype(np.int64)  # counted from the bottom
    keep = (
        (lengths > 0.0)
        & (ci >= 0)
        & (ci < geom.grid_cols)
        & (ri >= 0)
        & (ri < geom.grid_rows)
    )
    flat = (geom.grid_rows - 1 - ri[keep]) * geom.grid_cols + ci[keep]
    lengths = lengths[keep]
    if flat.size == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    # corner-grazing rays can split one pixel into two segments; merge them
    uniq, inverse = np.unique(flat, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inverse, lengths)
    return uniq, merged


def build_projection_matrix(geom: ScanGeometry) -> SparseMatrix:
    """Exact line/pixel intersection matrix, one row per ray.

    Rows are angle-major: row a*n_rays + r belongs to view angle index a
    and detector position r.  Rays that miss the grid produce zero rows.
    """
    rows: list[tuple[np.ndarray, np.ndarray]] = []
    offsets = geom.ray_offsets()
    for theta in geom.angles():
        c, s = np.cos(theta), np.sin(theta)
        for t in offsets:
            rows.append(_ray_row(t * c, t * s, -s, c, geom))
    return SparseMatrix.from_rows(geom.n_pixels, rows)


def generate_phantom(ellipses: list[EllipseSpec], geom: ScanGeometry) -> Image:
    """Sum of ellipse values over all ellipses containing each pixel center.

    Membership uses the closed ellipse (boundary counts as inside).
    """
    xs, ys = pixel_centers(geom.grid_rows, geom.grid_cols, geom.pixel_size)
    data = np.zeros(geom.n_pixels)
    for e in ellipses:
        dx = xs - e.center_x
        dy = ys - e.center_y
        cr, sr = np.cos(e.rotation), np.sin(e.rotation)
        u = (dx * cr + dy * sr) / e.semi_axis_a
        v = (-dx * sr + dy * cr) / e.semi_axis_b
        data[u * u + v * v <= 1.0] += e.delta_value
    return Image(data, geom.grid_rows, geom.grid_cols)


def default_head_ellipses() -> list[EllipseSpec]:
    """Built-in head-like phantom: attenuating ring plus low-contrast features.

    The ring value is 0.416; the interior settles at 0.210 and the features
    stay inside the 0.204..0.21675 display window.
    """
    rows = [
        (0.0, 0.0, 6.6, 8.4, 0.0, 0.416),
        (0.0, 0.0, 5.7, 7.5, 0.0, -0.206),
        (0.0, 1.5, 2.2, 2.8, 0.0, 0.004),
        (-2.2, -2.0, 1.2, 1.6, 0.3, -0.004),
        (2.2, -2.0, 1.2, 1.6, -0.3, 0.0065),
        (0.0, -4.6, 0.7, 0.7, 0.0, 0.005),
    ]
    return [EllipseSpec(*row) for row in rows]


def read_phantom_spec(path) -> list[EllipseSpec]:
    """Parse an ellipse-per-line spec file.

    Each non-comment line holds six whitespace-separated numbers:
    center_x center_y semi_axis_a semi_axis_b rotation delta_value.
    """
    ellipses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(
                    f"{path}: line {lineno}: expected 6 numbers, got {len(parts)}"
                )
            try:
                numbers = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            try:
                ellipses.append(EllipseSpec(*numbers))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return ellipses


def write_phantom_spec(path, ellipses: list[EllipseSpec]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# center_x center_y semi_axis_a semi_axis_b rotation delta_value\n")
        for e in ellipses:
            fh.write(
                f"{e.center_x:.17g} {e.center_y:.17g} {e.semi_axis_a:.17g} "
                f"{e.semi_axis_b:.17g} {e.rotation:.17g} {e.delta_value:.17g}\n"
            )


def simulate_data(
    projection: SparseMatrix,
    phantom: Image,
    geom: ScanGeometry,
    mean_photons: float | None,
    seed: int = 0,
) -> Sinogram:
    """Ray integrals of the phantom, optionally with transmission counting noise.

    With mean_photons=None the exact integrals are returned.  Otherwise each
    ray draws count ~ Poisson(mean_photons * exp(-integral)) from a seeded
    PCG64 generator (bit-reproducible for a given seed), the count is clamped
    to at least one photon, and the measured integral is
    -log(count / mean_photons).
    """
    exact = matvec(projection, phantom.data)
    if mean_photons is None:
        return Sinogram(exact, geom)
    if mean_photons <= 0:
        raise ValueError("mean_photons must be positive (or None for exact data)")
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = rng.poisson(mean_photons * np.exp(-exact)).astype(np.float64)
    counts = np.maximum(counts, 1.0)
    return Sinogram(-np.log(counts / mean_photons), geom)
