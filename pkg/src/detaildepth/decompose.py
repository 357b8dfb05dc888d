"""Base/detail split of a depth map by masked bilateral filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import DepthGrid
from .errors import EmptyInputError

__all__ = [
    "BilateralParams",
    "ShapeDecomposition",
    "center_median",
    "bilateral_base",
    "decompose",
    "laplacian_rms",
]


@dataclass(frozen=True)
class BilateralParams:
    """Range sigma in meters, spatial sigma in pixels.

    ``kernel_radius=None`` resolves per grid to
    ``min(ceil(2 * sigma_space), max(width, height))``.
    """

    sigma_depth: float = 0.10
    sigma_space: float = 75.0
    kernel_radius: int | None = None

    def __post_init__(self):
        if not self.sigma_depth > 0:
            raise ValueError(f"sigma_depth must be > 0, got {self.sigma_depth}")
        if not self.sigma_space > 0:
            raise ValueError(f"sigma_space must be > 0, got {self.sigma_space}")
        if self.kernel_radius is not None and self.kernel_radius < 1:
            raise ValueError(f"kernel_radius must be >= 1, got {self.kernel_radius}")

    def radius_for(self, grid: DepthGrid) -> int:
        if self.kernel_radius is not None:
            return int(self.kernel_radius)
        return max(1, min(math.ceil(2.0 * self.sigma_space), max(grid.width, grid.height)))


@dataclass(frozen=True)
class ShapeDecomposition:
    base: DepthGrid
    detail: DepthGrid

    def reconstruct(self) -> np.ndarray:
        return self.base.values + self.detail.values


def center_median(grid: DepthGrid) -> DepthGrid:
    """Subtract the lower median of the valid depths."""
    valid = grid.valid_values()
    if valid.size == 0:
        raise EmptyInputError("cannot center a depth grid with no valid pixels")
    median = np.partition(valid, (valid.size - 1) // 2)[(valid.size - 1) // 2]
    return grid.with_values(grid.values - median)


def bilateral_base(grid: DepthGrid, params: BilateralParams = BilateralParams()) -> DepthGrid:
    """Masked bilateral filter; invalid pixels neither receive nor give weight."""
    if grid.count == 0:
        raise EmptyInputError("bilateral filter needs at least one valid pixel")
    out = kernels().bilateral(grid.values, grid.mask, float(params.sigma_space),
                              float(params.sigma_depth), params.radius_for(grid))
    return grid.with_values(out)


def _dyadic_quantum(c):
    """Largest power of two dividing each nonzero float in ``c``."""
    mant, exp = np.frexp(c)
    m = (mant * 2.0 ** 53).astype(np.int64)
    return np.ldexp((m & -m).astype(np.float64), exp - 53)


def _snap(base, centered):
    # Put the base on the finest power-of-two grid q that still divides the
    # centered value c and spans |c| + |b| within 52 bits. Then c - b and
    # b + (c - b) are both exact, and the base moves by at most q / 2, about
    # one ulp of |c| + |b|. When no such grid exists (|b| far above a c with
    # many low bits) the base is left as is.
    out = base.copy()
    nz = np.isfinite(centered) & (centered != 0.0) & np.isfinite(base)
    c = centered[nz]
    b = base[nz]
    _, e = np.frexp(np.abs(c) + np.abs(b))
    q = np.ldexp(1.0, e - 52)
    ok = q <= _dyadic_quantum(c)
    snapped = b.copy()
    snapped[ok] = np.rint(b[ok] / q[ok]) * q[ok]
    out[nz] = snapped
    return out


def decompose(grid: DepthGrid, params: BilateralParams = BilateralParams()) -> ShapeDecomposition:
    """Median-center ``grid`` and split it into bilateral base plus residual detail.

    ``base.values + detail.values`` equals the centered input exactly on
    every valid pixel.
    """
    centered = center_median(grid)
    base = _snap(bilateral_base(centered, params).values, centered.values)
    detail = centered.values - base
    return ShapeDecomposition(centered.with_values(base), centered.with_values(detail))


def laplacian_rms(grid: DepthGrid) -> float:
    """RMS of the 4-neighbour Laplacian over pixels whose whole stencil is valid."""
    v, m = grid.values, grid.mask
    if grid.height < 3 or grid.width < 3:
        return 0.0
    inner = m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    if not inner.any():
        return 0.0
    lap = (v[:-2, 1:-1] + v[2:, 1:-1] + v[1:-1, :-2] + v[1:-1, 2:] - 4.0 * v[1:-1, 1:-1])
    return float(np.sqrt(np.mean(lap[inner] ** 2)))
