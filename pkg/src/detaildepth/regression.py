"""Discretised heatmaps and integral (soft-argmax) regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthGrid
from .errors import NotNormalizedError, OutOfRangeError

__all__ = [
    "DepthBinning",
    "VolumeHeatmap",
    "softmax_normalize",
    "integral_joint",
    "integral_joints",
    "integral_depthmap",
    "encode_depth_soft",
    "DEFAULT_JOINTS",
    "DEFAULT_PARTS",
]

DEFAULT_JOINTS = 16
DEFAULT_PARTS = 14  # plus background


@dataclass(frozen=True)
class DepthBinning:
    """``bins`` equal bins over ``[z_min, z_max]``, represented by their centres."""

    z_min: float = -0.6
    z_max: float = 0.6
    bins: int = 19

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError(f"z_min must be < z_max, got [{self.z_min}, {self.z_max}]")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")

    @property
    def width(self) -> float:
        return (self.z_max - self.z_min) / self.bins

    def centers(self) -> np.ndarray:
        # written as a weighted mean of the ends so a symmetric range gives
        # exactly antisymmetric centres (and an exact 0 for an odd middle bin)
        k = np.arange(self.bins, dtype=np.float64)
        b = float(self.bins)
        return ((2 * b - 2 * k - 1) * self.z_min + (2 * k + 1) * self.z_max) / (2 * b)


def _expect(p, centers):
    """``sum_k p[..., k] * centers[k]``, adding mirrored bins first."""
    prods = p * centers
    n = prods.shape[-1]
    half = n // 2
    total = (prods[..., :half] + prods[..., ::-1][..., :half]).sum(axis=-1)
    if n % 2:
        total = total + prods[..., half]
    return total


@dataclass(frozen=True, eq=False)
class VolumeHeatmap:
    """Non-negative weights of shape ``(channels, height, width, bins)``.

    Scores straight out of a network may be negative; wrap them with
    ``raw=True`` and pass them through :func:`softmax_normalize`.
    """

    values: np.ndarray
    raw: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4 or min(v.shape) < 1:
            raise ValueError(f"heatmap must be (channels, height, width, bins), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap values must be finite")
        if not self.raw and np.any(v < 0):
            raise ValueError("heatmap weights must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def depth_bins(self) -> int:
        return self.values.shape[3]

    def channel(self, k) -> np.ndarray:
        return self.values[k]


def softmax_normalize(hm: VolumeHeatmap) -> VolumeHeatmap:
    """Softmax over all cells of each channel, max-shifted for stability."""
    v = hm.values
    flat = v.reshape(v.shape[0], -1)
    e = np.exp(flat - flat.max(axis=1, keepdims=True))
    e /= e.sum(axis=1, keepdims=True)
    return VolumeHeatmap(e.reshape(v.shape))


def _check_sum(total, tol, what):
    bad = np.abs(np.asarray(total) - 1.0) > tol
    if np.any(bad):
        worst = float(np.max(np.abs(np.asarray(total) - 1.0)))
        raise NotNormalizedError(f"{what} sums deviate from 1 by up to {worst:.3g} (tolerance {tol})")


def integral_joint(channel, binning: DepthBinning = DepthBinning(), tol=1e-4):
    """Expected ``(x, y, z)`` of one normalised ``(height, width, bins)`` volume.

    ``x`` and ``y`` are in pixel units with cell ``(row, col)`` centred at
    ``(col, row)``; ``z`` is in meters.
    """
    p = np.asarray(channel, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != binning.bins:
        raise ValueError(f"expected (height, width, {binning.bins}) volume, got {p.shape}")
    _check_sum(p.sum(), tol, "joint heatmap")
    rows = np.arange(p.shape[0], dtype=np.float64)
    cols = np.arange(p.shape[1], dtype=np.float64)
    x = float(np.einsum("rcb,c->", p, cols))
    y = float(np.einsum("rcb,r->", p, rows))
    z = float(_expect(p.sum(axis=(0, 1)), binning.centers()))
    return x, y, z


def integral_joints(hm: VolumeHeatmap, binning: DepthBinning = DepthBinning(), tol=1e-4):
    """``(channels, 3)`` array of expected joint positions."""
    return np.array([integral_joint(hm.channel(k), binning, tol) for k in range(hm.channels)])


def integral_depthmap(hm: VolumeHeatmap, binning: DepthBinning = DepthBinning(), tol=1e-4) -> DepthGrid:
    """Per-pixel expectation of bin-centre depths (first channel of ``hm``)."""
    p = hm.values[0]
    if p.shape[2] != binning.bins:
        raise ValueError(f"heatmap has {p.shape[2]} bins, binning expects {binning.bins}")
    _check_sum(p.sum(axis=2), tol, "per-pixel bin distribution")
    return DepthGrid(_expect(p, binning.centers()))


def encode_depth_soft(grid: DepthGrid, binning: DepthBinning = DepthBinning()) -> VolumeHeatmap:
    """Split each depth linearly between its two nearest bin centres.

    Depths between ``z_min`` and the first centre (or the last centre and
    ``z_max``) land one-hot on the end bin. Masked-out pixels get a one-hot
    on the middle bin so the volume stays normalised.
    """
    v = grid.values
    valid = grid.mask
    bad = valid & ((v < binning.z_min) | (v > binning.z_max))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise OutOfRangeError(
            f"{int(bad.sum())} depth(s) outside [{binning.z_min}, {binning.z_max}], "
            f"first at pixel ({r}, {c}) = {v[r, c]}")
    n = binning.bins
    centers = binning.centers()
    pos = np.where(valid, (v - centers[0]) / binning.width, (n - 1) // 2)
    pos = np.clip(pos, 0.0, n - 1)
    pos = np.where(np.abs(pos - np.rint(pos)) < 1e-9, np.rint(pos), pos)
    lo = np.minimum(np.floor(pos).astype(np.int64), n - 1)
    frac = pos - lo
    out = np.zeros(grid.shape + (n,))
    r, c = np.indices(grid.shape)
    out[r, c, lo] = 1.0 - frac
    hi = np.minimum(lo + 1, n - 1)
    out[r, c, hi] += frac
    return VolumeHeatmap(out[None])
