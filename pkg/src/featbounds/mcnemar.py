"""Threshold-swept McNemar comparison of two detectors.

For every (threshold, amount) cell each scene is a success for a detector
when its repeatability reaches the threshold. The discordant counts give a
continuity-corrected Z statistic; its sign says which detector won
(positive: the first one).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import MismatchError, ValidationError
from .imaging import amounts_label
from .repeatability import RepeatabilityMatrix

RELIABLE_MIN = 30
DEFAULT_THRESHOLDS = tuple(round(0.1 * i, 10) for i in range(1, 10))
GRID_CSV_HEADER = ("threshold", "amount", "z", "reliable", "p", "n_sf", "n_fs", "n_ss", "n_ff")


def outcome(score: float, threshold: float) -> bool:
    """True (success) iff score >= threshold."""
    return score >= threshold


class McNemarCounts(NamedTuple):
    n_sf: int
    n_fs: int
    n_ss: int = 0
    n_ff: int = 0


class McNemarZ(NamedTuple):
    magnitude: float
    sign: int
    reliable: bool

    @property
    def signed(self) -> float:
        return self.sign * self.magnitude


def mcnemar_z(counts: McNemarCounts) -> McNemarZ:
    n_sf, n_fs = int(counts.n_sf), int(counts.n_fs)
    if min(counts) < 0:
        raise ValidationError(f"negative count in {counts}")
    discordant = n_sf + n_fs
    sign = (n_sf > n_fs) - (n_sf < n_fs)
    if discordant == 0:
        return McNemarZ(0.0, sign, False)
    magnitude = max(0, abs(n_sf - n_fs) - 1) / math.sqrt(discordant)
    return McNemarZ(magnitude, sign, discordant >= RELIABLE_MIN)


def z_to_p(z: float) -> float:
    """Two-tailed probability 2 (1 - Phi(z)), via erfc to avoid cancellation."""
    if z < 0:
        raise ValidationError(f"z magnitude must be >= 0, got {z}")
    return math.erfc(z / math.sqrt(2.0))


@dataclass
class ZScoreGrid:
    detector_a: str
    detector_b: str
    thresholds: tuple[float, ...]
    amounts: tuple[float, ...]
    z: np.ndarray  # (t, m) signed
    reliable: np.ndarray  # (t, m) bool
    p: np.ndarray  # (t, m), NaN where unreliable
    n_sf: np.ndarray
    n_fs: np.ndarray
    n_ss: np.ndarray
    n_ff: np.ndarray
    scene_ids: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GRID_CSV_HEADER)
        for i, thr in enumerate(self.thresholds):
            for k, amount in enumerate(self.amounts):
                rel = bool(self.reliable[i, k])
                writer.writerow(
                    [
                        repr(float(thr)),
                        amounts_label(amount),
                        repr(float(self.z[i, k])),
                        "true" if rel else "false",
                        repr(float(self.p[i, k])) if rel else "",
                        int(self.n_sf[i, k]),
                        int(self.n_fs[i, k]),
                        int(self.n_ss[i, k]),
                        int(self.n_ff[i, k]),
                    ]
                )
        return buf.getvalue()

    def unreliable_cells(self) -> list[dict]:
        return [
            {"threshold": float(self.thresholds[i]), "amount": float(self.amounts[k])}
            for i, k in zip(*np.nonzero(~self.reliable))
        ]


def validate_thresholds(thresholds: Sequence[float]) -> tuple[float, ...]:
    thr = tuple(float(t) for t in thresholds)
    if not thr:
        raise ValidationError("at least one threshold is required")
    if any(not 0.0 <= t <= 1.0 for t in thr):
        raise ValidationError("thresholds must lie in [0, 1]")
    if any(b <= a for a, b in zip(thr, thr[1:])):
        raise ValidationError("thresholds must be strictly increasing")
    return thr


def align(matrix_a: RepeatabilityMatrix, matrix_b: RepeatabilityMatrix) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Scores of both matrices restricted to the scenes neither excluded."""
    if len(matrix_a.amounts) != len(matrix_b.amounts) or not np.array_equal(matrix_a.amounts, matrix_b.amounts):
        raise MismatchError("matrices have different transformation amounts")
    all_a = set(matrix_a.scene_ids) | set(matrix_a.excluded)
    all_b = set(matrix_b.scene_ids) | set(matrix_b.excluded)
    if all_a != all_b:
        raise MismatchError("matrices cover different scenes")
    common = sorted(set(matrix_a.scene_ids) & set(matrix_b.scene_ids))
    if not common:
        raise MismatchError("no scenes in common after exclusions")
    ia = {s: i for i, s in enumerate(matrix_a.scene_ids)}
    ib = {s: i for i, s in enumerate(matrix_b.scene_ids)}
    sa = matrix_a.scores[[ia[s] for s in common]]
    sb = matrix_b.scores[[ib[s] for s in common]]
    return tuple(common), sa, sb


def z_grid(
    matrix_a: RepeatabilityMatrix,
    matrix_b: RepeatabilityMatrix,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> ZScoreGrid:
    thr = validate_thresholds(thresholds)
    scenes, sa, sb = align(matrix_a, matrix_b)
    t = np.asarray(thr)[None, :, None]
    # (scenes, thresholds, amounts)
    succ_a = sa[:, None, :] >= t
    succ_b = sb[:, None, :] >= t
    n_sf = np.sum(succ_a & ~succ_b, axis=0)
    n_fs = np.sum(~succ_a & succ_b, axis=0)
    n_ss = np.sum(succ_a & succ_b, axis=0)
    n_ff = np.sum(~succ_a & ~succ_b, axis=0)
    shape = n_sf.shape
    z = np.zeros(shape)
    reliable = np.zeros(shape, dtype=bool)
    p = np.full(shape, np.nan)
    for i in range(shape[0]):
        for k in range(shape[1]):
            res = mcnemar_z(McNemarCounts(int(n_sf[i, k]), int(n_fs[i, k]), int(n_ss[i, k]), int(n_ff[i, k])))
            z[i, k] = res.signed
            reliable[i, k] = res.reliable
            if res.reliable:
                p[i, k] = z_to_p(res.magnitude)
    return ZScoreGrid(
        matrix_a.detector_id,
        matrix_b.detector_id,
        thr,
        tuple(matrix_a.amounts),
        z,
        reliable,
        p,
        n_sf,
        n_fs,
        n_ss,
        n_ff,
        scenes,
    )
