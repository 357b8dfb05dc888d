"""Depth evaluation: threshold accuracy, MAE and the error CDF, in centimeters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthGrid, joint_mask
from .errors import EmptyInputError

__all__ = [
    "DEFAULT_THRESHOLDS_CM",
    "CDF_SAMPLES",
    "DepthEvalReport",
    "ReportComparison",
    "evaluate",
    "compare_reports",
]

DEFAULT_THRESHOLDS_CM = (1.25, 2.5, 5.0)
CDF_SAMPLES = 256
M_TO_CM = 100.0


@dataclass(frozen=True)
class DepthEvalReport:
    thresholds: tuple[float, ...]
    accuracy: tuple[float, ...]  # percent of pixels with error strictly below each threshold
    mae: float  # cm
    cdf_error: np.ndarray  # cm
    cdf_fraction: np.ndarray
    count: int

    def row(self) -> str:
        return " ".join(f"{a:.2f}" for a in self.accuracy) + f" {self.mae:.3f}"

    def header(self) -> str:
        return " ".join(f"acc@{t:g}cm" for t in self.thresholds) + " mae_cm"

    def table(self) -> str:
        return self.header() + "\n" + self.row() + "\n"

    def as_record(self) -> dict:
        return {
            "thresholds_cm": list(self.thresholds),
            "accuracy_percent": list(self.accuracy),
            "mae_cm": self.mae,
            "count": self.count,
            "cdf": [[float(e), float(f)] for e, f in zip(self.cdf_error, self.cdf_fraction)],
        }


def evaluate(pred: DepthGrid, gt: DepthGrid, thresholds=DEFAULT_THRESHOLDS_CM) -> DepthEvalReport:
    """Compare predicted and reference depths over their joint mask."""
    mask = joint_mask(pred, gt)
    if not mask.any():
        raise EmptyInputError("prediction and ground truth share no valid pixel")
    err = np.abs(pred.values[mask] * M_TO_CM - gt.values[mask] * M_TO_CM)
    n = err.size
    thresholds = tuple(float(t) for t in thresholds)
    accuracy = tuple(100.0 * np.count_nonzero(err < t) / n for t in thresholds)
    ordered = np.sort(err)
    levels = np.linspace(0.0, ordered[-1], CDF_SAMPLES)
    fraction = np.searchsorted(ordered, levels, side="right") / n
    return DepthEvalReport(thresholds, accuracy, float(err.mean()), levels, fraction, n)


@dataclass(frozen=True)
class ReportComparison:
    """Deltas ``a - b``; a flag is True where ``a`` is better."""

    thresholds: tuple[float, ...]
    accuracy_delta: tuple[float, ...]
    mae_delta: float
    accuracy_a_better: tuple[bool, ...]
    mae_a_better: bool

    def row(self) -> str:
        cells = [f"{d:+.2f}{'*' if w else ''}" for d, w in zip(self.accuracy_delta, self.accuracy_a_better)]
        cells.append(f"{self.mae_delta:+.3f}{'*' if self.mae_a_better else ''}")
        return " ".join(cells)


def compare_reports(a: DepthEvalReport, b: DepthEvalReport) -> ReportComparison:
    if a.thresholds != b.thresholds:
        raise ValueError(f"threshold sets differ: {a.thresholds} vs {b.thresholds}")
    acc = tuple(x - y for x, y in zip(a.accuracy, b.accuracy))
    return ReportComparison(
        thresholds=a.thresholds,
        accuracy_delta=acc,
        mae_delta=a.mae - b.mae,
        accuracy_a_better=tuple(d > 0 for d in acc),
        mae_a_better=a.mae < b.mae,
    )
