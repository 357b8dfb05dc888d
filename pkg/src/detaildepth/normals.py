"""Surface normals from depth by local plane fitting, and angular error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import CameraModel, DepthGrid, NormalGrid, back_project_grid
from .errors import DimensionMismatchError, EmptyInputError

__all__ = ["PlaneFitParams", "AngularStats", "normals_from_depth", "angular_error", "RANK_TOL"]

# smallest / largest eigenvalue of the 3x3 normal equations below this is degenerate
RANK_TOL = 1e-10


@dataclass(frozen=True)
class PlaneFitParams:
    window_radius: int = 2
    min_points: int = 3

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.min_points < 3:
            raise ValueError(f"min_points must be >= 3, got {self.min_points}")


@dataclass(frozen=True)
class AngularStats:
    mean: float
    median: float
    count: int


def normals_from_depth(grid: DepthGrid, camera: CameraModel = CameraModel(),
                       params: PlaneFitParams = PlaneFitParams()) -> NormalGrid:
    """Fit ``z = a*x + b*y + c`` to the back-projected window around each pixel.

    The normal is ``normalize(a, b, -1)``, which always faces the camera.
    Pixels with fewer than ``min_points`` valid window members, or whose
    normal equations are rank deficient, come back masked out.
    """
    x, y, z = back_project_grid(grid, camera)
    normals, ok = kernels().plane_fit(x, y, z, grid.mask, int(params.window_radius),
                                      int(params.min_points), RANK_TOL)
    return NormalGrid(normals, ok)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"normal grids differ in shape: {a.shape} vs {b.shape}")
    mask = a.mask & b.mask
    if not mask.any():
        raise EmptyInputError("normal grids share no valid pixel")
    return mask


def angular_error(a: NormalGrid, b: NormalGrid) -> AngularStats:
    """Mean and median angle in degrees over the joint mask.

    The median of an even count is the lower middle value.
    """
    mask = _check_pair(a, b)
    dot = np.sum(a.normals[mask] * b.normals[mask], axis=1)
    angles = np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))
    k = (angles.size - 1) // 2
    return AngularStats(float(angles.mean()), float(np.partition(angles, k)[k]), int(angles.size))
