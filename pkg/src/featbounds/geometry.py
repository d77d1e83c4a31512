"""Homographies, point projection, and the common region of an image pair.

Coordinates: origin at the centre of the top-left pixel, x to the right,
y downwards. A pixel (row r, column c) sits at (x=c, y=r).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FormatError, ProjectionError, ValidationError

W_EPS = 1e-12
DET_EPS = 1e-12


class PlanarPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class Homography:
    """A 3x3 projective map. Stored as a read-only float64 array."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValidationError(f"homography must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("homography has non-finite entries")
        peak = np.max(np.abs(m))
        if peak == 0 or abs(np.linalg.det(m / peak)) <= DET_EPS:
            raise ValidationError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_entries(cls, entries: Sequence[float]) -> "Homography":
        """Build from 9 numbers in row-major order."""
        vals = [float(v) for v in entries]
        if len(vals) != 9:
            raise ValidationError(f"homography needs 9 entries, got {len(vals)}")
        return cls(np.array(vals).reshape(3, 3))

    def entries(self) -> list[float]:
        return [float(v) for v in self.matrix.ravel()]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(3)))

    def __eq__(self, other):
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        return f"Homography({self.entries()})"


def project_points(h: Homography, xy: np.ndarray) -> np.ndarray:
    """Project an (N, 2) array of points. Raises if any lands at infinity."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    if h.is_identity:
        return xy.copy()
    m = h.matrix
    u = m[0, 0] * xy[:, 0] + m[0, 1] * xy[:, 1] + m[0, 2]
    v = m[1, 0] * xy[:, 0] + m[1, 1] * xy[:, 1] + m[1, 2]
    w = m[2, 0] * xy[:, 0] + m[2, 1] * xy[:, 1] + m[2, 2]
    if np.any(np.abs(w) < W_EPS):
        bad = int(np.flatnonzero(np.abs(w) < W_EPS)[0])
        raise ProjectionError(f"point {tuple(xy[bad])} maps to infinity")
    return np.column_stack((u / w, v / w))


def project_point(h: Homography, p: PlanarPoint | Sequence[float]) -> PlanarPoint:
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValidationError(f"point ({x}, {y}) is not finite")
    out = project_points(h, np.array([[x, y]]))[0]
    return PlanarPoint(float(out[0]), float(out[1]))


def local_scale_factor(h: Homography, xy: np.ndarray) -> np.ndarray:
    """Linear scale change of the map around each point, sqrt(|det J|)."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    m = h.matrix
    w = m[2, 0] * xy[:, 0] + m[2, 1] * xy[:, 1] + m[2, 2]
    return np.sqrt(np.abs(np.linalg.det(m) / w**3))


def _inside(xy: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    w, h = dims
    return (xy[:, 0] >= 0) & (xy[:, 0] <= w - 1) & (xy[:, 1] >= 0) & (xy[:, 1] <= h - 1)


def common_region_mask(h: Homography, target_dims: tuple[int, int], xy: np.ndarray) -> np.ndarray:
    """Vectorised form of :func:`common_region_contains` (no reference-bounds check)."""
    return _inside(project_points(h, xy), target_dims)


def common_region_contains(
    h: Homography,
    ref_dims: tuple[int, int],
    target_dims: tuple[int, int],
    p: PlanarPoint | Sequence[float],
) -> bool:
    """True iff reference point ``p`` projects inside the target image."""
    pt = np.array([[float(p[0]), float(p[1])]])
    if not _inside(pt, ref_dims)[0]:
        raise ValidationError(f"point {tuple(pt[0])} lies outside the reference image {ref_dims}")
    return bool(common_region_mask(h, target_dims, pt)[0])


def load_homography_text(path: str | Path) -> Homography:
    """Read the plain-text layout: three lines of three whitespace-separated numbers."""
    path = Path(path)
    rows = [line.split() for line in path.read_text().splitlines() if line.strip()]
    if len(rows) != 3 or any(len(r) != 3 for r in rows):
        raise FormatError(f"{path}: expected 3 lines of 3 numbers")
    try:
        return Homography.from_entries([float(v) for r in rows for v in r])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_homography_text(h: Homography, path: str | Path) -> None:
    lines = [" ".join(repr(float(v)) for v in row) for row in h.matrix]
    Path(path).write_text("\n".join(lines) + "\n")
