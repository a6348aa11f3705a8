"""Circulant frequency-domain preconditioner and its symmetric square root."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linops import Image

# fraction of the output magnitude that the imaginary FFT residue may reach
_IMAG_TOL = 1e-10


@dataclass(frozen=True)
class PreconditionerSpec:
    """Radial ramp-times-raised-cosine filter on the image DFT grid.

    The scalar profile is (|w| + ramp_offset) * (hamming + (1-hamming)*cos w)
    for angular frequency w in [0, pi], floored at ``floor`` so the filter
    stays positive (the raised cosine goes negative near pi when hamming is
    below one half).  identity=True bypasses the transform entirely and is
    meant for tests that need an exact identity operator.
    """

    ramp_offset: float
    hamming: float
    grid_rows: int
    grid_cols: int
    floor: float = 1e-8
    identity: bool = False

    def __post_init__(self):
        if self.ramp_offset <= 0:
            raise ValueError("ramp_offset must be positive")
        if not 0.0 < self.hamming <= 1.0:
            raise ValueError("hamming must lie in (0, 1]")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid shape must be positive")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


def filter_value(omega: float, spec: PreconditionerSpec) -> float:
    """Scalar filter profile at one radial frequency in [0, pi]."""
    if not 0.0 <= omega <= np.pi:
        raise ValueError(f"omega must lie in [0, pi], got {omega}")
    if spec.identity:
        return 1.0
    raw = (abs(omega) + spec.ramp_offset) * (
        spec.hamming + (1.0 - spec.hamming) * np.cos(omega)
    )
    return float(max(spec.floor, raw))


@lru_cache(maxsize=32)
def filter_grid(spec: PreconditionerSpec) -> np.ndarray:
    """Per-DFT-bin filter values on the rows-by-cols frequency grid.

    Each axis carries the usual angular frequencies 2*pi*k/n wrapped to
    (-pi, pi]; the two are combined radially and clipped at pi so the
    scalar profile's domain is never left.
    """
    if spec.identity:
        d = np.ones((spec.grid_rows, spec.grid_cols))
    else:
        w_r = 2.0 * np.pi * np.abs(np.fft.fftfreq(spec.grid_rows))
        w_c = 2.0 * np.pi * np.abs(np.fft.fftfreq(spec.grid_cols))
        omega = np.minimum(np.pi, np.hypot(w_r[:, None], w_c[None, :]))
        raw = (omega + spec.ramp_offset) * (
            spec.hamming + (1.0 - spec.hamming) * np.cos(omega)
        )
        d = np.maximum(spec.floor, raw)
    d.setflags(write=False)
    return d


def _apply_filter(x, spec: PreconditionerSpec, d: np.ndarray) -> np.ndarray:
    data = x.data if isinstance(x, Image) else np.asarray(x, dtype=np.float64)
    n = spec.grid_rows * spec.grid_cols
    if data.shape != (n,):
        raise ValueError(
            f"vector has shape {data.shape}, expected ({n},) for a "
            f"{spec.grid_rows}x{spec.grid_cols} grid"
        )
    if spec.identity:
        return data.copy()
    grid = data.reshape(spec.grid_rows, spec.grid_cols)
    out = np.fft.ifft2(d * np.fft.fft2(grid))
    scale = max(float(np.max(np.abs(out.real))), np.finfo(float).tiny)
    if float(np.max(np.abs(out.imag))) > _IMAG_TOL * scale:
        raise ArithmeticError(
            "filter application left a non-negligible imaginary residue; "
            "the filter grid must be even-symmetric"
        )
    return np.ascontiguousarray(out.real).ravel()


def apply_M(x, spec: PreconditionerSpec) -> np.ndarray:
    """Apply the full preconditioner: inverse DFT of D times DFT of x."""
    return _apply_filter(x, spec, filter_grid(spec))


def apply_N(x, spec: PreconditionerSpec) -> np.ndarray:
    """Apply the symmetric square root N, with N^T N = M."""
    if spec.identity:
        return _apply_filter(x, spec, filter_grid(spec))
    return _apply_filter(x, spec, np.sqrt(filter_grid(spec)))


def apply_N_inv_T(x, spec: PreconditionerSpec) -> np.ndarray:
    """Apply N^{-T} (= N^{-1}; N is symmetric and positive definite)."""
    if spec.identity:
        return _apply_filter(x, spec, filter_grid(spec))
    return _apply_filter(x, spec, 1.0 / np.sqrt(filter_grid(spec)))


def m_operator(spec: PreconditionerSpec):
    return lambda v: apply_M(v, spec)


def n_operator(spec: PreconditionerSpec):
    return lambda v: apply_N(v, spec)


def n_inv_t_operator(spec: PreconditionerSpec):
    return lambda v: apply_N_inv_T(v, spec)
