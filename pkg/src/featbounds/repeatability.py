"""Repeatability of a detector between a reference image and a transformed one.

A reference keypoint is repeated when some target keypoint lies within
``epsilon`` pixels of its ground-truth projection. Pairs are chosen greedily
by ascending distance (ties: reference index, then target index) so each
keypoint is used at most once. The score is ``n_rep / n_ref`` where
``n_ref`` counts reference keypoints inside the common region.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .detectors import KeypointSet
from .errors import EmptyReferenceError, FormatError, InvariantError, MismatchError, ValidationError
from .geometry import Homography, common_region_mask, local_scale_factor, project_points
from .imaging import SceneSequence, amounts_label

DEFAULT_EPSILON = 4.0
SCALE_GATE = 1.5


@dataclass(frozen=True)
class MatchResult:
    n_ref: int
    n_rep: int
    pairs: tuple[tuple[int, int, float], ...]

    @property
    def score(self) -> float:
        return self.n_rep / self.n_ref


def match_keypoints(
    ref: KeypointSet,
    target: KeypointSet,
    h: Homography,
    target_dims: tuple[int, int],
    epsilon: float = DEFAULT_EPSILON,
    scale_gate: bool = False,
) -> MatchResult:
    """Greedy one-to-one matching of projected reference points to target points.

    With ``scale_gate`` a pair also needs the target scale within a factor
    1.5 of the projected reference scale.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    ref_xy = ref.xy()
    in_common = common_region_mask(h, target_dims, ref_xy) if len(ref_xy) else np.zeros(0, bool)
    n_ref = int(in_common.sum())
    if n_ref == 0:
        raise EmptyReferenceError("empty reference in common region")
    projected = project_points(h, ref_xy)
    if scale_gate:
        ref_scale = ref.scales() * local_scale_factor(h, ref_xy)
        ii, jj, dd = _kernels.greedy_match(
            projected, target.xy(), epsilon, in_common, ref_scale, target.scales(), SCALE_GATE
        )
    else:
        ii, jj, dd = _kernels.greedy_match(projected, target.xy(), epsilon, in_common)
    pairs = tuple((int(i), int(j), float(d)) for i, j, d in zip(ii, jj, dd))
    return MatchResult(n_ref, len(pairs), pairs)


def repeatability(
    ref: KeypointSet,
    target: KeypointSet,
    h: Homography,
    target_dims: tuple[int, int],
    epsilon: float = DEFAULT_EPSILON,
    scale_gate: bool = False,
) -> float:
    return match_keypoints(ref, target, h, target_dims, epsilon, scale_gate).score


@dataclass
class RepeatabilityMatrix:
    """Scenes x amounts grid of repeatability scores for one detector and transform."""

    detector_id: str
    kind: str
    amounts: tuple[float, ...]
    scene_ids: tuple[str, ...]
    scores: np.ndarray
    excluded: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.amounts = tuple(float(a) for a in self.amounts)
        self.scene_ids = tuple(self.scene_ids)
        self.excluded = tuple(self.excluded)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(len(self.scene_ids), len(self.amounts))
        if np.any((self.scores < 0) | (self.scores > 1)) or not np.all(np.isfinite(self.scores)):
            raise ValidationError("repeatability scores must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def column(self, k: int) -> np.ndarray:
        return self.scores[:, k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scene_id", *(amounts_label(a) for a in self.amounts)])
        for sid, row in zip(self.scene_ids, self.scores):
            writer.writerow([sid, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    def excluded_json(self) -> str:
        return json.dumps(sorted(self.excluded), indent=2) + "\n"

    def save(self, csv_path: str | Path, excluded_path: str | Path) -> None:
        Path(csv_path).write_text(self.to_csv())
        Path(excluded_path).write_text(self.excluded_json())

    @classmethod
    def from_csv(
        cls, text: str, detector_id: str, kind: str, excluded: Sequence[str] = ()
    ) -> "RepeatabilityMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not rows[0] or rows[0][0] != "scene_id":
            raise FormatError("matrix CSV must start with a 'scene_id' header")
        try:
            amounts = [float(a) for a in rows[0][1:]]
            ids = [r[0] for r in rows[1:] if r]
            scores = [[float(v) for v in r[1:]] for r in rows[1:] if r]
        except ValueError as exc:
            raise FormatError(f"matrix CSV: {exc}") from exc
        if any(len(r) != len(amounts) for r in scores):
            raise FormatError("matrix CSV rows have inconsistent lengths")
        return cls(detector_id, kind, tuple(amounts), tuple(ids), np.array(scores).reshape(len(ids), len(amounts)), tuple(excluded))

    @classmethod
    def load(cls, csv_path, excluded_path, detector_id: str, kind: str) -> "RepeatabilityMatrix":
        excluded = json.loads(Path(excluded_path).read_text()) if Path(excluded_path).exists() else []
        return cls.from_csv(Path(csv_path).read_text(), detector_id, kind, excluded)


def scene_row(
    seq: SceneSequence,
    keypoints: Mapping[tuple[str, int], KeypointSet],
    epsilon: float = DEFAULT_EPSILON,
    scale_gate: bool = False,
) -> np.ndarray | None:
    """Scores of one scene against its reference, or None if the reference is empty."""
    try:
        ref = keypoints[(seq.scene_id, 0)]
    except KeyError:
        raise ValidationError(f"missing keypoint set for {seq.scene_id} variant 0") from None
    row = np.empty(len(seq.variants))
    for k, var in enumerate(seq.variants):
        try:
            target = keypoints[(seq.scene_id, k)]
        except KeyError:
            raise ValidationError(f"missing keypoint set for {seq.scene_id} variant {k}") from None
        try:
            row[k] = repeatability(ref, target, var.homography, var.image.dims, epsilon, scale_gate)
        except EmptyReferenceError:
            return None
    return row


def build_matrix(
    sequences: Sequence[SceneSequence],
    keypoints: Mapping[tuple[str, int], KeypointSet],
    epsilon: float = DEFAULT_EPSILON,
    detector_id: str | None = None,
    scale_gate: bool = False,
) -> RepeatabilityMatrix:
    """Scenes x amounts matrix. Rows are ordered by scene id; empty-reference scenes are excluded."""
    if not sequences:
        raise ValidationError("no sequences given")
    amounts = sequences[0].amounts
    kind = sequences[0].kind
    for seq in sequences:
        if seq.amounts != amounts or seq.kind != kind:
            raise MismatchError(f"scene {seq.scene_id} has different amounts or transform kind")
    if detector_id is None:
        detector_id = next(iter(keypoints.values())).detector_id if keypoints else "unknown"
    rows, ids, excluded = [], [], []
    for seq in sorted(sequences, key=lambda s: s.scene_id):
        row = scene_row(seq, keypoints, epsilon, scale_gate)
        if row is None:
            excluded.append(seq.scene_id)
        else:
            rows.append(row)
            ids.append(seq.scene_id)
    scores = np.array(rows).reshape(len(ids), len(amounts))
    if scores.size and not np.all(scores[:, 0] == 1.0):
        raise InvariantError("reference-vs-reference repeatability is not 1.0")
    return RepeatabilityMatrix(detector_id, kind, amounts, tuple(ids), scores, tuple(excluded))
