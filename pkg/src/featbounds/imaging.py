"""Grayscale images, file I/O, and the three degradation sequences.

Every 8-bit result is rounded half away from zero (:func:`round_half_away`)
and clamped to [0, 255].
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError, features

from . import _kernels
from .errors import FormatError, ValidationError
from .geometry import Homography

KINDS = ("jpeg", "blur", "brightness")
AMOUNT_RANGES = {"jpeg": (0.0, 98.0), "blur": (0.0, 8.0), "brightness": (0.0, 99.0)}
DEFAULT_AMOUNTS = {
    "jpeg": (0, 10, 20, 30, 40, 50, 60, 70, 80, 85, 90, 93, 95, 98),
    "blur": (0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5),
    "brightness": (0, 5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 70, 80, 90),
}
BLUR_MODES = ("independent", "cumulative")

# ITU-R BT.601
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def round_half_away(x) -> np.ndarray:
    """Round to nearest integer, ties away from zero. Exact for all float64 inputs."""
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    frac = x - whole
    return whole + np.where(np.abs(frac) >= 0.5, np.sign(x), 0.0)


def to_uint8(x) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Image:
    """Single-channel 8-bit raster, row-major, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValidationError(f"image must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("zero-dimension image")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
                raise ValidationError("pixel values must be integers in [0, 255]")
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        """(width, height)"""
        return (self.width, self.height)

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def copy(self) -> "Image":
        return Image(self.pixels)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"Image({self.width}x{self.height})"


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _decode_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    tokens, pos = _pgm_tokens(data[2:], 3)
    pos += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError("malformed PGM header") from exc
    if width == 0 or height == 0:
        raise FormatError("zero-dimension image")
    if width < 0 or height < 0 or not 0 < maxval < 65536:
        raise FormatError("malformed PGM header")
    if magic == b"P5":
        raster = data[pos + 1 :]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = width * height * dtype.itemsize
        if len(raster) < need:
            raise FormatError("truncated PGM raster")
        vals = np.frombuffer(raster[:need], dtype=dtype).astype(np.float64)
    else:
        try:
            vals = np.array([int(t) for t in data[pos:].split()[: width * height]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError("malformed ASCII PGM raster") from exc
        if vals.size < width * height:
            raise FormatError("truncated PGM raster")
    if maxval != 255:
        vals = round_half_away(vals * 255.0 / maxval)
    return vals.reshape(height, width).astype(np.uint8)


def luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (h, w, 3) array, rounded half away from zero."""
    rgb = np.asarray(rgb, dtype=np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    return to_uint8(wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2])


def load_image(path: str | Path) -> Image:
    """Read PGM (P2/P5), PNG, or JPEG as a grayscale :class:`Image`."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P2"):
        return Image(_decode_pgm(data))
    try:
        pil = PILImage.open(io.BytesIO(data))
        pil.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: unreadable or unsupported image format") from exc
    if pil.format not in ("PNG", "JPEG", "PPM"):
        raise FormatError(f"{path}: unsupported format {pil.format}")
    if pil.width == 0 or pil.height == 0:
        raise FormatError(f"{path}: zero-dimension image")
    if pil.mode in ("1", "L"):
        return Image(np.asarray(pil.convert("L")))
    if pil.mode == "LA":
        return Image(np.asarray(pil)[..., 0])
    if pil.mode in ("I;16", "I;16B", "I"):
        vals = np.asarray(pil, dtype=np.float64)
        return Image(to_uint8(vals * 255.0 / 65535.0))
    return Image(luma(np.asarray(pil.convert("RGB"))))


def encode_pgm(img: Image) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def save_image(img: Image, path: str | Path) -> None:
    """Write PGM (``.pgm``) or PNG (``.png``)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        path.write_bytes(encode_pgm(img))
    elif suffix == ".png":
        PILImage.fromarray(np.asarray(img.pixels)).save(path, format="PNG")
    else:
        raise ValidationError(f"cannot write images with suffix {suffix!r}")


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _check_amount(kind: str, amount: float) -> float:
    lo, hi = AMOUNT_RANGES[kind]
    amount = float(amount)
    if not math.isfinite(amount) or amount < lo or amount > hi:
        label = {"jpeg": "ratio", "blur": "sigma", "brightness": "decrease"}[kind]
        raise ValidationError(f"{label} out of range [{lo:g}, {hi:g}]: {amount}")
    return amount


def codec_id() -> str:
    return f"Pillow {PILImage.__version__} / libjpeg {features.version('jpg')}"


def jpeg_quality(compression_ratio: float) -> int:
    return int(round_half_away(100.0 - compression_ratio))


def jpeg_roundtrip(img: Image, compression_ratio: float) -> tuple[Image, bytes | None]:
    """Encode at quality ``100 - ratio`` and decode. Returns (image, encoded bytes)."""
    ratio = _check_amount("jpeg", compression_ratio)
    if ratio == 0:
        return img.copy(), None
    buf = io.BytesIO()
    PILImage.fromarray(np.asarray(img.pixels)).save(
        buf, format="JPEG", quality=jpeg_quality(ratio), optimize=False, progressive=False
    )
    encoded = buf.getvalue()
    decoded = PILImage.open(io.BytesIO(encoded))
    return Image(np.asarray(decoded.convert("L"))), encoded


def jpeg_transform(img: Image, compression_ratio: float) -> Image:
    return jpeg_roundtrip(img, compression_ratio)[0]


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian, radius ceil(4 sigma), normalised to unit sum."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Float-in, float-out separable Gaussian with replicated borders."""
    if sigma <= 0:
        return np.asarray(arr, dtype=np.float64).copy()
    return _kernels.separable_filter(arr, gaussian_kernel(sigma))


def blur_transform(img: Image, sigma: float) -> Image:
    sigma = _check_amount("blur", sigma)
    if sigma == 0:
        return img.copy()
    return Image(to_uint8(gaussian_smooth(img.as_float(), sigma)))


def brightness_transform(img: Image, decrease: float) -> Image:
    decrease = _check_amount("brightness", decrease)
    if decrease == 0:
        return img.copy()
    # v * (100 - d) / 100 rather than v * (1 - d/100): keeps 255 at 90% on the exact tie 25.5
    return Image(to_uint8(img.as_float() * (100.0 - decrease) / 100.0))


TRANSFORMS = {"jpeg": jpeg_transform, "blur": blur_transform, "brightness": brightness_transform}


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    amounts: tuple[float, ...]
    blur_mode: str = "independent"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown transform kind {self.kind!r}; expected one of {KINDS}")
        amounts = tuple(float(a) for a in self.amounts)
        if not amounts:
            raise ValidationError("transform needs at least one amount")
        if amounts[0] != 0:
            raise ValidationError("first amount must be 0 (the untransformed reference)")
        if any(b <= a for a, b in zip(amounts, amounts[1:])):
            raise ValidationError("amounts must be strictly increasing")
        for a in amounts:
            _check_amount(self.kind, a)
        if self.blur_mode not in BLUR_MODES:
            raise ValidationError(f"blur_mode must be one of {BLUR_MODES}")
        object.__setattr__(self, "amounts", amounts)

    @classmethod
    def default(cls, kind: str, **kw) -> "TransformSpec":
        if kind not in DEFAULT_AMOUNTS:
            raise ValidationError(f"unknown transform kind {kind!r}")
        return cls(kind, DEFAULT_AMOUNTS[kind], **kw)

    def effective_amounts(self) -> tuple[float, ...]:
        """Per-variant effective amount; differs from ``amounts`` only for cumulative blur."""
        if self.kind == "blur" and self.blur_mode == "cumulative":
            return tuple(float(math.sqrt(sum(a * a for a in self.amounts[: i + 1]))) for i in range(len(self.amounts)))
        return self.amounts


class Variant(NamedTuple):
    amount: float
    image: Image
    homography: Homography
    encoded: bytes | None = None  # JPEG bitstream for jpeg variants
    effective_amount: float | None = None


@dataclass(frozen=True)
class SceneSequence:
    scene_id: str
    reference: Image
    kind: str
    variants: tuple[Variant, ...] = field(default_factory=tuple)

    @property
    def amounts(self) -> tuple[float, ...]:
        return tuple(v.amount for v in self.variants)


def synthesize_sequence(reference: Image, spec: TransformSpec, scene_id: str) -> SceneSequence:
    """One variant per amount; variant 0 is the reference, every homography the identity."""
    ident = Homography.identity()
    effective = spec.effective_amounts()
    variants: list[Variant] = []
    prev = reference
    for amount, eff in zip(spec.amounts, effective):
        encoded = None
        if spec.kind == "jpeg":
            img, encoded = jpeg_roundtrip(reference, amount)
        elif spec.kind == "blur" and spec.blur_mode == "cumulative":
            img = blur_transform(prev, amount)
            prev = img
        else:
            img = TRANSFORMS[spec.kind](reference, amount)
        variants.append(Variant(amount, img, ident, encoded, eff))
    return SceneSequence(scene_id, reference, spec.kind, tuple(variants))


def textured_scene(rng: np.random.Generator, width: int = 192, height: int = 192, n_shapes: int = 60) -> Image:
    """Random piecewise-constant scene (rectangles and discs over a shaded backdrop)."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    gx, gy, g0 = rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(60, 190)
    canvas = g0 + gx * (xx - width / 2) + gy * (yy - height / 2)
    for _ in range(n_shapes):
        value = rng.uniform(0, 255)
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        if rng.random() < 0.6:
            hw, hh = rng.uniform(4, width / 6), rng.uniform(4, height / 6)
            mask = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
        else:
            r = rng.uniform(3, min(width, height) / 8)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        canvas[mask] = value
    canvas = gaussian_smooth(canvas, 0.7)
    canvas += rng.normal(0.0, 2.0, size=canvas.shape)
    return Image(to_uint8(canvas))


def amounts_label(amount: float) -> str:
    """Stable directory/CSV label for an amount (``0``, ``0.5``, ``85``)."""
    return f"{float(amount):.10g}"
