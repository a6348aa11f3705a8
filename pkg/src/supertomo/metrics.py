"""Scalar objectives and the masked reconstruction-error figure of merit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import pixel_centers
from .linops import Image, SparseMatrix, matvec


def _as_vector(x) -> np.ndarray:
    return x.data if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def residual_f(x, projection: SparseMatrix, b: np.ndarray) -> float:
    """Squared residual norm ||R x - b||^2 of the measurement system."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (projection.n_rows,):
        raise ValueError(
            f"residual_f: matrix has {projection.n_rows} rows but b has shape {b.shape}"
        )
    r = matvec(projection, _as_vector(x)) - b
    return float(r @ r)


def bayesian_objective(
    x, projection: SparseMatrix, b: np.ndarray, snr: float, prior: Image
) -> float:
    """snr^2 * ||R x - b||^2 + ||x - prior||^2, the regularized target."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    xv = _as_vector(x)
    pv = prior.data
    if xv.shape != pv.shape:
        raise ValueError(f"x has shape {xv.shape} but the prior has {pv.shape}")
    d = xv - pv
    return snr * snr * residual_f(xv, projection, b) + float(d @ d)


@dataclass(frozen=True, eq=False)
class EllipseMask:
    """Pixel set inside a centered axis-aligned ellipse, for masked errors."""

    indices: np.ndarray
    semi_axis_h: float = 5.0
    semi_axis_v: float = 7.0

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if self.semi_axis_h <= 0 or self.semi_axis_v <= 0:
            raise ValueError("mask semi-axes must be positive")

    @classmethod
    def centered(
        cls,
        rows: int,
        cols: int,
        pixel_size: float,
        semi_axis_h: float = 5.0,
        semi_axis_v: float = 7.0,
    ) -> "EllipseMask":
        """Pixels whose centers fall inside the ellipse (boundary included)."""
        xs, ys = pixel_centers(rows, cols, pixel_size)
        inside = (xs / semi_axis_h) ** 2 + (ys / semi_axis_v) ** 2 <= 1.0
        return cls(np.nonzero(inside)[0], semi_axis_h, semi_axis_v)


def selective_error(x: Image, reference: Image, mask: EllipseMask) -> float:
    """Masked relative error sqrt(sum_S (x - ref)^2) / sqrt(sum_S ref^2).

    The normalization uses the reference restricted to the mask, so the
    measure is scale-free; a reference that vanishes on the mask is an error.
    """
    if (x.rows, x.cols) != (reference.rows, reference.cols):
        raise ValueError(
            f"image is {x.rows}x{x.cols} but reference is "
            f"{reference.rows}x{reference.cols}"
        )
    ref = reference.data[mask.indices]
    denom = float(np.sqrt(ref @ ref))
    if denom == 0.0:
        raise ValueError("reference vanishes on the mask; selective error undefined")
    diff = x.data[mask.indices] - ref
    return float(np.sqrt(diff @ diff)) / denom
