"""Max, min and median repeatability curves and the regions between them.

The operating region is the band between the max and min curves; the
guarantee region is the area under the min curve. Both are reported as
trapezoid areas over the amount axis rescaled to [0, 1].
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .imaging import amounts_label
from .repeatability import RepeatabilityMatrix


def _scores(matrix) -> np.ndarray:
    scores = matrix.scores if isinstance(matrix, RepeatabilityMatrix) else np.asarray(matrix, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] == 0 or scores.shape[1] == 0:
        raise ValidationError("empty repeatability matrix")
    return scores


def max_curve(matrix) -> np.ndarray:
    return _scores(matrix).max(axis=0)


def min_curve(matrix) -> np.ndarray:
    return _scores(matrix).min(axis=0)


def median_curve(matrix) -> np.ndarray:
    # even row counts average the two middle values
    return np.median(_scores(matrix), axis=0)


@dataclass(frozen=True)
class BoundsCurves:
    amounts: tuple[float, ...]
    max_curve: tuple[float, ...]
    median_curve: tuple[float, ...]
    min_curve: tuple[float, ...]
    operating_area: float
    guarantee_area: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["amount", "max", "median", "min"])
        for row in zip(self.amounts, self.max_curve, self.median_curve, self.min_curve):
            writer.writerow([amounts_label(row[0]), *(repr(float(v)) for v in row[1:])])
        return buf.getvalue()

    def areas(self) -> dict:
        return {"operating_area": self.operating_area, "guarantee_area": self.guarantee_area}


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def region_areas(amounts, max_c, min_c) -> tuple[float, float]:
    """(operating_area, guarantee_area) on the amount axis rescaled to [0, 1]."""
    a = np.asarray(amounts, dtype=np.float64)
    if a.size < 2:
        raise ValidationError("region areas need at least 2 amounts")
    x = (a - a[0]) / (a[-1] - a[0])
    hi = np.asarray(max_c, dtype=np.float64)
    lo = np.asarray(min_c, dtype=np.float64)
    return _trapezoid(hi - lo, x), _trapezoid(lo, x)


def compute_bounds(matrix: RepeatabilityMatrix) -> BoundsCurves:
    hi, med, lo = max_curve(matrix), median_curve(matrix), min_curve(matrix)
    if len(matrix.amounts) >= 2:
        operating, guarantee = region_areas(matrix.amounts, hi, lo)
    else:
        operating = guarantee = float("nan")
    return BoundsCurves(
        tuple(matrix.amounts),
        tuple(float(v) for v in hi),
        tuple(float(v) for v in med),
        tuple(float(v) for v in lo),
        operating,
        guarantee,
    )
