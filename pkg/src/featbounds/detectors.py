"""Keypoints, two built-in detectors, and keypoint file formats.

The built-in detectors (Harris corners and difference-of-Gaussians blobs)
exist so the benchmark runs end to end without third-party binaries. Any
other detector plugs in through :func:`ingest_keypoints`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import FormatError, ValidationError
from .imaging import Image, gaussian_smooth

CSV_HEADER = ("x", "y", "scale")
SCALE_RTOL = 1e-9


def ellipse_scale(a: float, b: float, c: float) -> float:
    """Radius of the circle with the ellipse's geometric-mean axis, (ac - b^2)^(-1/4)."""
    det = a * c - b * b
    if not (a > 0 and c > 0 and det > 0):
        raise ValidationError(f"non-positive-definite ellipse ({a}, {b}, {c})")
    return 1.0 / math.sqrt(math.sqrt(det))


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    response: float = 0.0
    ellipse: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.scale, self.response)):
            raise ValidationError(f"non-finite keypoint field in {self}")
        if not self.scale > 0:
            raise ValidationError(f"keypoint scale must be > 0, got {self.scale}")
        if self.ellipse is not None:
            expected = ellipse_scale(*self.ellipse)
            if not math.isclose(self.scale, expected, rel_tol=SCALE_RTOL):
                raise ValidationError(f"scale {self.scale} disagrees with ellipse radius {expected}")


@dataclass(frozen=True)
class KeypointSet:
    points: tuple[Keypoint, ...]
    detector_id: str
    image_ref: tuple[str, int] | None = None
    dims: tuple[int, int] | None = None  # (width, height) when known

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.dims is not None:
            w, h = self.dims
            for p in self.points:
                if not (0 <= p.x <= w - 1 and 0 <= p.y <= h - 1):
                    raise ValidationError(f"keypoint ({p.x}, {p.y}) outside image bounds {self.dims}")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Keypoint]:
        return iter(self.points)

    def xy(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.points], dtype=np.float64).reshape(-1, 2)

    def scales(self) -> np.ndarray:
        return np.array([p.scale for p in self.points], dtype=np.float64)


def _sorted_set(xs, ys, scales, responses, detector_id, image_ref, dims) -> KeypointSet:
    # descending |response|, then y, then x
    order = np.lexsort((xs, ys, -np.abs(responses)))
    pts = tuple(
        Keypoint(float(xs[i]), float(ys[i]), float(scales[i]), float(responses[i])) for i in order
    )
    return KeypointSet(pts, detector_id, image_ref, dims)


def _parabolic_offset(left, centre, right):
    denom = left - 2.0 * centre + right
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(denom < 0, 0.5 * (left - right) / denom, 0.0)
    return np.clip(off, -0.5, 0.5)


def _refine(resp: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sub-pixel peak via independent 1-D parabolas along x and y."""
    h, w = resp.shape
    fx = xs.astype(np.float64)
    fy = ys.astype(np.float64)
    inx = (xs > 0) & (xs < w - 1)
    iny = (ys > 0) & (ys < h - 1)
    c = resp[ys, xs]
    if inx.any():
        fx[inx] += _parabolic_offset(resp[ys[inx], xs[inx] - 1], c[inx], resp[ys[inx], xs[inx] + 1])
    if iny.any():
        fy[iny] += _parabolic_offset(resp[ys[iny] - 1, xs[iny]], c[iny], resp[ys[iny] + 1, xs[iny]])
    return fx, fy


# ---------------------------------------------------------------------------
# Harris
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HarrisParams:
    sigma_d: float = 1.0
    sigma_i: float = 2.0
    k: float = 0.06
    threshold_rel: float = 0.01  # fraction of the image's maximum response
    threshold_abs: float = 0.0
    nms_radius: int = 5

    def __post_init__(self):
        if self.sigma_d < 0 or self.sigma_i <= 0 or self.k <= 0 or self.nms_radius < 1:
            raise ValidationError(f"invalid Harris parameters {self}")

    def to_dict(self) -> dict:
        return asdict(self)


def _central_diff(arr: np.ndarray, axis: int) -> np.ndarray:
    padded = np.pad(arr, [(1, 1) if a == axis else (0, 0) for a in range(2)], mode="edge")
    if axis == 1:
        return 0.5 * (padded[:, 2:] - padded[:, :-2])
    return 0.5 * (padded[2:, :] - padded[:-2, :])


def harris_response(img: Image, params: HarrisParams = HarrisParams()) -> np.ndarray:
    """det(M) - k trace(M)^2 of the Gaussian-weighted structure tensor."""
    smooth = gaussian_smooth(img.as_float() / 255.0, params.sigma_d)
    ix = _central_diff(smooth, 1)
    iy = _central_diff(smooth, 0)
    sxx = gaussian_smooth(ix * ix, params.sigma_i)
    syy = gaussian_smooth(iy * iy, params.sigma_i)
    sxy = gaussian_smooth(ix * iy, params.sigma_i)
    trace = sxx + syy
    return sxx * syy - sxy * sxy - params.k * trace * trace


def detect_harris(
    img: Image,
    params: HarrisParams | None = None,
    detector_id: str = "harris",
    image_ref: tuple[str, int] | None = None,
) -> KeypointSet:
    params = params or HarrisParams()
    if img.width < 16 or img.height < 16:
        raise ValidationError("Harris detector needs an image of at least 16x16")
    resp = harris_response(img, params)
    peak = float(resp.max())
    if not peak > 0:
        return KeypointSet((), detector_id, image_ref, img.dims)
    threshold = max(params.threshold_abs, params.threshold_rel * peak)
    ys, xs = np.nonzero(_kernels.nms_mask(resp, params.nms_radius, threshold))
    fx, fy = _refine(resp, ys, xs)
    scales = np.full(len(xs), 2.0 * params.sigma_i)
    return _sorted_set(fx, fy, scales, resp[ys, xs], detector_id, image_ref, img.dims)


# ---------------------------------------------------------------------------
# Difference of Gaussians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DogParams:
    octaves: int = 3
    scales_per_octave: int = 3
    contrast_threshold: float = 0.03  # on intensities scaled to [0, 1]
    edge_ratio: float = 10.0
    sigma0: float = 1.6
    assumed_blur: float = 0.5

    def __post_init__(self):
        if self.octaves < 1 or self.scales_per_octave < 1 or self.edge_ratio <= 1:
            raise ValidationError(f"invalid DoG parameters {self}")
        if not 0 <= self.assumed_blur < self.sigma0:
            raise ValidationError("assumed_blur must be in [0, sigma0)")

    def to_dict(self) -> dict:
        return asdict(self)


def dog_stack(img: Image, params: DogParams = DogParams()) -> tuple[np.ndarray, np.ndarray]:
    """Full-resolution DoG stack and the sigma of each level.

    Octaves are not decimated: level j uses sigma0 * 2**(j / s) on the
    original pixel grid, which keeps integer translations exact.
    """
    s = params.scales_per_octave
    n_gauss = params.octaves * s + 3
    sigmas = params.sigma0 * 2.0 ** (np.arange(n_gauss) / s)
    g = gaussian_smooth(img.as_float() / 255.0, math.sqrt(sigmas[0] ** 2 - params.assumed_blur**2))
    gauss = [g]
    for j in range(1, n_gauss):
        g = gaussian_smooth(g, math.sqrt(sigmas[j] ** 2 - sigmas[j - 1] ** 2))
        gauss.append(g)
    dog = np.stack([gauss[j + 1] - gauss[j] for j in range(n_gauss - 1)])
    return dog, sigmas[:-1]


def detect_dog(
    img: Image,
    params: DogParams | None = None,
    detector_id: str = "dog",
    image_ref: tuple[str, int] | None = None,
) -> KeypointSet:
    """Scale-space extrema of the DoG stack, contrast- and edge-filtered.

    A keypoint at octave o, level l (1..s) gets scale 1.6 * 2**(o + l/s).
    """
    params = params or DogParams()
    if img.width < 32 or img.height < 32:
        raise ValidationError("DoG detector needs an image of at least 32x32")
    dog, sigmas = dog_stack(img, params)
    zs, ys, xs = np.nonzero(_kernels.scale_space_extrema(dog, params.contrast_threshold))
    if len(zs):
        d = dog[zs, ys, xs]
        dxx = dog[zs, ys, xs + 1] + dog[zs, ys, xs - 1] - 2 * d
        dyy = dog[zs, ys + 1, xs] + dog[zs, ys - 1, xs] - 2 * d
        dxy = 0.25 * (
            dog[zs, ys + 1, xs + 1] - dog[zs, ys + 1, xs - 1] - dog[zs, ys - 1, xs + 1] + dog[zs, ys - 1, xs - 1]
        )
        tr = dxx + dyy
        det = dxx * dyy - dxy * dxy
        r = params.edge_ratio
        keep = (det > 0) & (tr * tr * r < (r + 1) ** 2 * det)
        zs, ys, xs = zs[keep], ys[keep], xs[keep]
    fx = xs.astype(np.float64)
    fy = ys.astype(np.float64)
    for z in np.unique(zs):
        sel = zs == z
        fx[sel], fy[sel] = _refine(dog[z], ys[sel], xs[sel])
    scales = params.sigma0 * 2.0 ** (zs / params.scales_per_octave)
    return _sorted_set(fx, fy, scales, dog[zs, ys, xs], detector_id, image_ref, img.dims)


DETECTORS = {"harris": (detect_harris, HarrisParams), "dog": (detect_dog, DogParams)}


# ---------------------------------------------------------------------------
# Keypoint files
# ---------------------------------------------------------------------------


def _finite(vals: list[float], where: str) -> list[float]:
    if not all(math.isfinite(v) for v in vals):
        raise FormatError(f"{where}: non-finite value")
    return vals


def parse_csv_keypoints(text: str, where: str = "<csv>") -> list[Keypoint]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(f.strip() for f in r)]
    if not rows or tuple(f.strip() for f in rows[0]) != CSV_HEADER:
        raise FormatError(f"{where}: malformed header, expected 'x,y,scale'")
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise FormatError(f"{where}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            x, y, scale = _finite([float(f) for f in row], f"{where}:{lineno}")
            points.append(Keypoint(x, y, scale))
        except (ValueError, ValidationError) as exc:
            raise FormatError(f"{where}:{lineno}: {exc}") from exc
    return points


def parse_oxford_keypoints(text: str, where: str = "<oxford>") -> list[Keypoint]:
    """Oxford affine-region layout: a numeric header, a count, then ``u v a b c`` per line.

    Extra columns after ``c`` (descriptor values) are ignored.
    """
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise FormatError(f"{where}: malformed header")
    try:
        float(lines[0][0])
        declared = float(lines[1][0])
    except ValueError as exc:
        raise FormatError(f"{where}: malformed header") from exc
    if len(lines[0]) != 1 or len(lines[1]) != 1 or declared < 0 or declared != int(declared):
        raise FormatError(f"{where}: malformed header")
    body = lines[2:]
    if len(body) != int(declared):
        raise FormatError(f"{where}: count mismatch (declared {int(declared)}, found {len(body)})")
    points = []
    for lineno, fields in enumerate(body, start=3):
        if len(fields) < 5:
            raise FormatError(f"{where}:{lineno}: expected 'u v a b c'")
        try:
            u, v, a, b, c = _finite([float(f) for f in fields[:5]], f"{where}:{lineno}")
        except ValueError as exc:
            raise FormatError(f"{where}:{lineno}: {exc}") from exc
        try:
            points.append(Keypoint(u, v, ellipse_scale(a, b, c), 0.0, (a, b, c)))
        except ValidationError as exc:
            raise FormatError(f"{where}:{lineno}: {exc}") from exc
    return points


def ingest_keypoints(
    path: str | Path,
    format: str = "csv",
    detector_id: str | None = None,
    image_ref: tuple[str, int] | None = None,
    dims: tuple[int, int] | None = None,
) -> KeypointSet:
    """Read an externally produced keypoint file (``csv`` or ``oxford``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not a text file") from exc
    if format == "csv":
        points = parse_csv_keypoints(text, str(path))
    elif format == "oxford":
        points = parse_oxford_keypoints(text, str(path))
    else:
        raise ValidationError(f"unknown keypoint format {format!r}")
    try:
        return KeypointSet(tuple(points), detector_id or path.stem, image_ref, dims)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def format_csv_keypoints(kps: KeypointSet) -> str:
    # repr() keeps the round trip lossless
    lines = [",".join(CSV_HEADER)]
    lines += [f"{p.x!r},{p.y!r},{p.scale!r}" for p in kps.points]
    return "\n".join(lines) + "\n"


def write_csv_keypoints(kps: KeypointSet, path: str | Path) -> None:
    Path(path).write_text(format_csv_keypoints(kps))


def format_oxford_keypoints(kps: KeypointSet) -> str:
    lines = ["1.0", str(len(kps))]
    for p in kps.points:
        a, b, c = p.ellipse if p.ellipse is not None else (p.scale**-2, 0.0, p.scale**-2)
        lines.append(f"{p.x!r} {p.y!r} {a!r} {b!r} {c!r}")
    return "\n".join(lines) + "\n"
