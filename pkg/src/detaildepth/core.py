"""Raster geometry shared by every module.

Grids are stored row-major as ``(height, width)`` arrays indexed ``(row, col)``
with the origin at the top-left pixel. The camera looks along ``+z``, so a
visible surface has a normal with negative z-component.

Masked-out entries are canonicalised to NaN on construction; no operation in
the package reads them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, InvalidPixelError

__all__ = [
    "DepthGrid",
    "NormalGrid",
    "CameraModel",
    "GridPoint3",
    "back_project",
    "back_project_grid",
    "neighbors4",
    "NEIGHBOR_OFFSETS",
    "joint_mask",
    "rmse",
]

# N, S, W, E
NEIGHBOR_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))

UNIT_TOL = 1e-6


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DepthGrid:
    """Metric depth per pixel with a validity mask.

    Parameters
    ----------
    values : array_like, shape (height, width)
        Depth in meters.
    mask : array_like of bool, optional
        Valid pixels. Defaults to the finite entries of ``values``.
    """

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"depth values must be a non-empty 2-D array, got shape {values.shape}")
        if self.mask is None:
            mask = np.isfinite(values)
        else:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != values.shape:
                raise DimensionMismatchError(
                    f"mask shape {mask.shape} does not match values shape {values.shape}")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("valid depth values must be finite")
        values[~mask] = np.nan
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def valid_values(self) -> np.ndarray:
        """Valid depths in row-major order."""
        return self.values[self.mask]

    def with_values(self, values, mask=None) -> DepthGrid:
        return DepthGrid(values, self.mask if mask is None else mask)

    def restrict(self, mask) -> DepthGrid:
        """Same depths with the mask narrowed to ``self.mask & mask``."""
        return DepthGrid(self.values, self.mask & np.asarray(mask, dtype=bool))

    def filled(self, fill=0.0) -> np.ndarray:
        """Writable copy with masked-out entries replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def __repr__(self):
        return f"DepthGrid({self.height}x{self.width}, valid={self.count})"


@dataclass(frozen=True, eq=False)
class NormalGrid:
    """Unit surface normals per pixel, oriented towards the camera.

    Construction checks that every valid normal is unit length within 1e-6
    and has a negative z-component. Use :meth:`oriented` to normalise and
    flip arbitrary input first.
    """

    normals: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        n = np.array(self.normals, dtype=np.float64, copy=True)
        if n.ndim != 3 or n.shape[2] != 3 or n.shape[0] < 1 or n.shape[1] < 1:
            raise ValueError(f"normals must have shape (height, width, 3), got {n.shape}")
        if self.mask is None:
            mask = np.all(np.isfinite(n), axis=2)
        else:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != n.shape[:2]:
                raise DimensionMismatchError(
                    f"mask shape {mask.shape} does not match normals shape {n.shape[:2]}")
        valid = n[mask]
        if not np.all(np.isfinite(valid)):
            raise ValueError("valid normals must be finite")
        if valid.size:
            length = np.linalg.norm(valid, axis=1)
            if np.any(np.abs(length - 1.0) > UNIT_TOL):
                raise ValueError("valid normals must be unit length within 1e-6")
            if np.any(valid[:, 2] >= 0.0):
                raise ValueError("valid normals must face the camera (z < 0)")
        n[~mask] = np.nan
        object.__setattr__(self, "normals", _frozen(n))
        object.__setattr__(self, "mask", _frozen(mask))

    @classmethod
    def oriented(cls, normals, mask=None) -> NormalGrid:
        """Normalise vectors and flip those pointing away from the camera.

        Zero-length vectors and vectors lying in the image plane cannot be
        oriented and are masked out.
        """
        n = np.array(normals, dtype=np.float64, copy=True)
        if mask is None:
            mask = np.all(np.isfinite(n), axis=-1)
        mask = np.array(mask, dtype=bool, copy=True)
        safe = np.where(mask[..., None], n, 0.0)
        length = np.linalg.norm(safe, axis=-1)
        ok = mask & (length > 0.0)
        safe[ok] /= length[ok][:, None]
        safe[ok & (safe[..., 2] > 0.0)] *= -1.0
        ok &= safe[..., 2] < 0.0
        return cls(safe, ok)

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.normals.shape[:2]

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def filled(self, fill=(0.0, 0.0, -1.0)) -> np.ndarray:
        return np.where(self.mask[..., None], self.normals, np.asarray(fill, dtype=np.float64))

    def __repr__(self):
        return f"NormalGrid({self.height}x{self.width}, valid={self.count})"


@dataclass(frozen=True)
class CameraModel:
    """Orthographic or pinhole back-projection.

    Orthographic: ``X = (col - cx) * scale``, ``Y = (row - cy) * scale``.
    Pinhole: ``X = (col - cx) * Z / fx``, ``Y = (row - cy) * Z / fy``.
    """

    variant: Literal["orthographic", "pinhole"] = "orthographic"
    scale: float = 0.005
    fx: float = 1.0
    fy: float = 1.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if self.variant == "orthographic":
            if not self.scale > 0:
                raise ValueError(f"orthographic scale must be > 0, got {self.scale}")
        elif self.variant == "pinhole":
            if not (self.fx > 0 and self.fy > 0):
                raise ValueError(f"focal lengths must be > 0, got fx={self.fx}, fy={self.fy}")
        else:
            raise ValueError(f"unknown camera variant {self.variant!r}")

    @classmethod
    def orthographic(cls, scale=0.005, cx=0.0, cy=0.0) -> CameraModel:
        return cls("orthographic", scale=float(scale), cx=float(cx), cy=float(cy))

    @classmethod
    def pinhole(cls, fx, fy, cx, cy) -> CameraModel:
        return cls("pinhole", fx=float(fx), fy=float(fy), cx=float(cx), cy=float(cy))

    @property
    def is_orthographic(self) -> bool:
        return self.variant == "orthographic"

    def xy(self, rows, cols, z):
        """Metric ``(X, Y)`` for pixel coordinates at depth ``z`` (broadcasts)."""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        if self.is_orthographic:
            x = (cols - self.cx) * self.scale
            y = (rows - self.cy) * self.scale
            return np.broadcast_arrays(x, y, np.asarray(z, dtype=np.float64))[:2]
        z = np.asarray(z, dtype=np.float64)
        return (cols - self.cx) * z / self.fx, (rows - self.cy) * z / self.fy

    def pixel_pitch(self, depth=1.0) -> float:
        """Metric width of one pixel column at ``depth``."""
        return self.scale if self.is_orthographic else depth / self.fx


@dataclass(frozen=True)
class GridPoint3:
    x: float
    y: float
    z: float

    def __iter__(self):
        return iter((self.x, self.y, self.z))


def _check_pixel(grid, pixel):
    row, col = pixel
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise InvalidPixelError(f"pixel {pixel} outside {grid.height}x{grid.width} raster")
    if not grid.mask[row, col]:
        raise InvalidPixelError(f"pixel {pixel} is masked out")
    return int(row), int(col)


def back_project(grid: DepthGrid, camera: CameraModel, pixel) -> GridPoint3:
    """Metric 3-D position of one valid pixel."""
    row, col = _check_pixel(grid, pixel)
    z = float(grid.values[row, col])
    x, y = camera.xy(row, col, z)
    return GridPoint3(float(x), float(y), z)


def back_project_grid(grid: DepthGrid, camera: CameraModel):
    """``(X, Y, Z)`` arrays for every pixel; NaN where masked out."""
    rows, cols = np.indices(grid.shape, dtype=np.float64)
    x, y = camera.xy(rows, cols, grid.values)
    x = np.where(grid.mask, x, np.nan)
    y = np.where(grid.mask, y, np.nan)
    return x, y, np.array(grid.values)


def neighbors4(grid, pixel) -> list[tuple[int, int]]:
    """Valid cardinal neighbours of a valid pixel, ordered N, S, W, E."""
    row, col = _check_pixel(grid, pixel)
    out = []
    for dr, dc in NEIGHBOR_OFFSETS:
        r, c = row + dr, col + dc
        if 0 <= r < grid.height and 0 <= c < grid.width and grid.mask[r, c]:
            out.append((r, c))
    return out


def joint_mask(*grids) -> np.ndarray:
    """Intersection of the masks of same-shaped grids."""
    shape = grids[0].shape
    for g in grids[1:]:
        if g.shape != shape:
            raise DimensionMismatchError(f"grid shapes differ: {shape} vs {g.shape}")
    mask = grids[0].mask.copy()
    for g in grids[1:]:
        mask &= g.mask
    return mask


def rmse(a: DepthGrid, b: DepthGrid) -> float:
    """Root-mean-square difference over the joint mask."""
    mask = joint_mask(a, b)
    if not mask.any():
        raise EmptyInputError("no pixel is valid in both grids")
    d = a.values[mask] - b.values[mask]
    return float(np.sqrt(np.mean(d * d)))
