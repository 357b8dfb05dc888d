"""Training losses over masked depth grids, with analytic gradients.

All grid losses reduce by the mean over valid pixels; gradient grids hold
``d loss / d prediction`` and are zero on masked-out pixels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import DepthGrid, NormalGrid, joint_mask
from .decompose import ShapeDecomposition
from .errors import DimensionMismatchError, EmptyInputError

__all__ = [
    "LossParams",
    "huber",
    "truncated_l1",
    "Stage1Losses",
    "Stage2Loss",
    "AblationLosses",
    "stage1_losses",
    "stage2_loss",
    "ablation_losses",
    "angular_normal_loss",
    "ANGLE_CLAMP",
]

HUBER_SLOPE = 0.2
ANGLE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossParams:
    alpha1: float = 0.2
    alpha2: float = 0.05
    alpha3: float = 0.05
    alpha4: float = 0.2
    alpha5: float = 0.2
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 15.0
    huber_variant: Literal["jump", "standard"] = "jump"

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "alpha5"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.huber_variant not in ("jump", "standard"):
            raise ValueError(f"huber_variant must be 'jump' or 'standard', got {self.huber_variant!r}")


def huber(x, alpha, variant="jump"):
    """Huber loss and its derivative.

    The ``"jump"`` variant is ``0.5 x^2`` inside ``|x| <= alpha`` and
    ``0.2 (|x| - alpha)`` outside, which jumps from ``0.5 alpha^2`` down to 0
    at the threshold. ``"standard"`` is the continuous textbook form.
    """
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    inside = ax <= alpha
    if variant == "jump":
        outer, slope = HUBER_SLOPE * (ax - alpha), HUBER_SLOPE
    elif variant == "standard":
        outer, slope = alpha * (ax - 0.5 * alpha), alpha
    else:
        raise ValueError(f"unknown Huber variant {variant!r}")
    value = np.where(inside, 0.5 * x * x, outer)
    grad = np.where(inside, x, slope * np.sign(x))
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def truncated_l1(x, alpha):
    """``min(|x|, alpha)`` and its derivative (0 at and beyond the threshold)."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    value = np.minimum(ax, alpha)
    grad = np.where(ax < alpha, np.sign(x), 0.0)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def _masked_mean(fn, pred: DepthGrid, target, mask, *args):
    if not mask.any():
        raise EmptyInputError("loss mask is empty")
    n = int(mask.sum())
    value, grad = fn(pred.values[mask] - target[mask], *args)
    g = np.zeros(pred.shape)
    g[mask] = grad / n
    return float(np.sum(value) / n), g


@dataclass(frozen=True)
class Stage1Losses:
    base: float
    detail: float
    grad_base: np.ndarray
    grad_detail: np.ndarray


@dataclass(frozen=True)
class Stage2Loss:
    total: float
    base: float
    detail: float
    composed: float
    grad_base: np.ndarray
    grad_detail: np.ndarray


@dataclass(frozen=True)
class AblationLosses:
    single_branch: float
    huber_composed: float
    grad_pred: np.ndarray
    grad_composed: np.ndarray


def stage1_losses(base: DepthGrid, detail: DepthGrid, gt: ShapeDecomposition,
                  params: LossParams = LossParams()) -> Stage1Losses:
    """Separate Huber losses of the base and detail branches against their targets."""
    mb = joint_mask(base, gt.base)
    md = joint_mask(detail, gt.detail)
    v = params.huber_variant
    lb, gb = _masked_mean(huber, base, gt.base.values, mb, params.alpha1, v)
    ld, gd = _masked_mean(huber, detail, gt.detail.values, md, params.alpha2, v)
    return Stage1Losses(lb, ld, gb, gd)


def _common_mask(*grids):
    shapes = {g.shape for g in grids}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"grid shapes differ: {sorted(shapes)}")
    return joint_mask(*grids)


def stage2_loss(base: DepthGrid, detail: DepthGrid, gt: DepthGrid, gt_decomp: ShapeDecomposition,
                params: LossParams = LossParams()) -> Stage2Loss:
    """Weighted branch losses plus the truncated-L1 loss of the composed depth.

    ``gt`` must be in the same (median-centred) frame as ``gt_decomp``.
    """
    mask = _common_mask(base, detail, gt, gt_decomp.base, gt_decomp.detail)
    v = params.huber_variant
    lb, gb = _masked_mean(huber, base, gt_decomp.base.values, mask, params.alpha1, v)
    ld, gd = _masked_mean(huber, detail, gt_decomp.detail.values, mask, params.alpha2, v)
    composed = base.with_values(base.values + detail.values, mask)
    lc, gc = _masked_mean(truncated_l1, composed, gt.values, mask, params.alpha3)
    total = params.beta1 * lb + params.beta2 * ld + params.beta3 * lc
    return Stage2Loss(
        total=total, base=lb, detail=ld, composed=lc,
        grad_base=params.beta1 * gb + params.beta3 * gc,
        grad_detail=params.beta2 * gd + params.beta3 * gc,
    )


def ablation_losses(pred: DepthGrid, gt: DepthGrid, base: DepthGrid, detail: DepthGrid,
                    params: LossParams = LossParams()) -> AblationLosses:
    """Single-branch Huber loss and the Huber-on-composed-depth variant.

    ``grad_composed`` is the gradient with respect to either branch, since
    both enter the composed depth with unit weight.
    """
    v = params.huber_variant
    m1 = _common_mask(pred, gt)
    l1, g1 = _masked_mean(huber, pred, gt.values, m1, params.alpha4, v)
    m2 = _common_mask(base, detail, gt)
    composed = base.with_values(base.values + detail.values, m2)
    l2, g2 = _masked_mean(huber, composed, gt.values, m2, params.alpha5, v)
    return AblationLosses(l1, l2, g1, g2)


def angular_normal_loss(pred: NormalGrid, gt: NormalGrid):
    """Mean angle in radians between predicted and reference normals.

    The gradient is taken with respect to the predicted vectors through
    their normalisation, so it is tangent to the unit sphere at each
    prediction. Dots are clamped to ``[-1 + 1e-7, 1 - 1e-7]``; clamped
    pixels contribute no gradient.
    """
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"normal grids differ in shape: {pred.shape} vs {gt.shape}")
    mask = pred.mask & gt.mask
    if not mask.any():
        raise EmptyInputError("normal grids share no valid pixel")
    p = pred.normals[mask]
    g = gt.normals[mask]
    n = len(p)
    raw = np.sum(p * g, axis=1)
    u = np.clip(raw, -1.0 + ANGLE_CLAMP, 1.0 - ANGLE_CLAMP)
    loss = float(np.mean(np.arccos(u)))
    free = (raw > -1.0 + ANGLE_CLAMP) & (raw < 1.0 - ANGLE_CLAMP)
    d = -1.0 / np.sqrt(1.0 - u * u)
    tangent = g - raw[:, None] * p
    grad = np.zeros(pred.shape + (3,))
    grad[mask] = np.where(free[:, None], d[:, None] * tangent / n, 0.0)
    return loss, grad
