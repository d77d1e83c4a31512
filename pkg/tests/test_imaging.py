import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image as PILImage

from featbounds.errors import FormatError, ValidationError
from featbounds.imaging import (
    DEFAULT_AMOUNTS,
    Image,
    TransformSpec,
    blur_transform,
    brightness_transform,
    encode_pgm,
    gaussian_kernel,
    jpeg_roundtrip,
    jpeg_transform,
    load_image,
    round_half_away,
    save_image,
    synthesize_sequence,
    textured_scene,
)

from conftest import smooth_gradient

images = arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)))


def psnr(a: Image, b: Image) -> float:
    mse = np.mean((a.as_float() - b.as_float()) ** 2)
    return 10 * math.log10(255.0**2 / mse)


# -- rounding ----------------------------------------------------------------


@pytest.mark.parametrize(
    "x, expected",
    [(0.5, 1), (1.5, 2), (2.5, 3), (-0.5, -1), (-2.5, -3), (25.5, 26), (0.49999999999999994, 0), (2.4, 2)],
)
def test_round_half_away(x, expected):
    assert round_half_away(x) == expected


# -- Image and I/O -----------------------------------------------------------


def test_image_rejects_bad_input():
    with pytest.raises(ValidationError):
        Image(np.zeros((0, 3), np.uint8))
    with pytest.raises(ValidationError):
        Image(np.array([[256]]))
    with pytest.raises(ValidationError):
        Image(np.zeros((2, 2, 3), np.uint8))


def test_image_is_read_only():
    img = Image(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1


def test_load_pgm_2x2(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(p)
    assert (img.width, img.height) == (2, 2)
    assert img.pixels.ravel().tolist() == [0, 255, 128, 64]


def test_load_pgm_with_comment_and_ascii(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P2\n# made by hand\n3 1\n255\n1 2 3\n")
    assert load_image(p).pixels.tolist() == [[1, 2, 3]]


def test_load_pgm_zero_dimension(tmp_path):
    p = tmp_path / "z.pgm"
    p.write_bytes(b"P5\n0 0\n255\n")
    with pytest.raises(FormatError, match="zero-dimension"):
        load_image(p)


def test_load_rejects_garbage_and_missing(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        load_image(p)
    with pytest.raises(OSError):
        load_image(tmp_path / "missing.pgm")


def test_rgb_png_converted_with_bt601(tmp_path):
    rgb = np.zeros((1, 3, 3), np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (0, 255, 0)
    rgb[0, 2] = (10, 20, 30)
    p = tmp_path / "c.png"
    PILImage.fromarray(rgb).save(p)
    got = load_image(p).pixels[0].tolist()
    # oracle: weights evaluated by hand, half-away rounding
    expected = [
        math.floor(0.299 * 255 + 0.5),
        math.floor(0.587 * 255 + 0.5),
        math.floor(0.299 * 10 + 0.587 * 20 + 0.114 * 30 + 0.5),
    ]
    assert got == expected == [76, 150, 18]


@settings(max_examples=30, deadline=None)
@given(images)
def test_pgm_and_png_round_trip(tmp_path_factory, arr):
    img = Image(arr)
    d = tmp_path_factory.mktemp("rt")
    for name in ("a.pgm", "a.png"):
        save_image(img, d / name)
        assert load_image(d / name) == img


# -- transforms --------------------------------------------------------------


@pytest.mark.parametrize("fn", [jpeg_transform, blur_transform, brightness_transform])
def test_amount_zero_is_identity(scene, fn):
    out = fn(scene, 0)
    assert out.pixels.tobytes() == scene.pixels.tobytes()


def test_jpeg_psnr_decreases_with_ratio():
    noise = Image(np.random.default_rng(5).integers(0, 256, size=(64, 64)).astype(np.uint8))
    assert psnr(noise, jpeg_transform(noise, 95)) < psnr(noise, jpeg_transform(noise, 20))


def test_jpeg_keeps_dims_and_returns_bitstream(scene):
    img, data = jpeg_roundtrip(scene, 50)
    assert img.dims == scene.dims
    assert data[:2] == b"\xff\xd8"


@pytest.mark.parametrize("ratio", [99, -1, float("nan")])
def test_jpeg_ratio_out_of_range(scene, ratio):
    with pytest.raises(ValidationError, match="ratio out of range"):
        jpeg_transform(scene, ratio)


def test_gaussian_kernel_shape_and_sum():
    k = gaussian_kernel(1.3)
    assert len(k) == 2 * math.ceil(4 * 1.3) + 1
    assert math.isclose(k.sum(), 1.0, rel_tol=1e-15)
    assert np.allclose(k, k[::-1])


def brute_force_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Direct 2-D convolution with the outer-product kernel and replicated borders."""
    r = math.ceil(4 * sigma)
    x = np.arange(-r, r + 1)
    g = np.exp(-(x**2) / (2 * sigma**2))
    k2 = np.outer(g, g) / np.outer(g, g).sum()
    h, w = arr.shape
    out = np.zeros((h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ys = np.clip(np.arange(h) + dy, 0, h - 1)
            xs = np.clip(np.arange(w) + dx, 0, w - 1)
            out += k2[dy + r, dx + r] * arr[np.ix_(ys, xs)]
    return out


@pytest.mark.usefixtures("backend")
def test_blur_impulse_matches_2d_oracle():
    arr = np.zeros((33, 33), np.uint8)
    arr[16, 16] = 255
    out = blur_transform(Image(arr), 1.0)
    oracle = brute_force_blur(arr.astype(float), 1.0)
    g = gaussian_kernel(1.0)
    centre_weight = g[len(g) // 2] ** 2
    assert out.pixels[16, 16] == round_half_away(255 * centre_weight)
    assert np.max(np.abs(out.pixels.astype(float) - round_half_away(oracle))) == 0


@pytest.mark.usefixtures("backend")
def test_blur_semigroup():
    img = smooth_gradient()
    twice = blur_transform(blur_transform(img, 1.0), 1.0)
    once = blur_transform(img, math.sqrt(2.0))
    assert np.max(np.abs(twice.as_float() - once.as_float())) <= 2


def test_blur_preserves_interior_mean(scene):
    out = blur_transform(scene, 2.0)
    inner = (slice(20, -20), slice(20, -20))
    assert abs(out.as_float()[inner].mean() - scene.as_float()[inner].mean()) <= 1.0


@pytest.mark.parametrize("sigma", [-0.1, 8.5])
def test_blur_sigma_out_of_range(scene, sigma):
    with pytest.raises(ValidationError):
        blur_transform(scene, sigma)


@pytest.mark.parametrize("v, d, expected", [(200, 20, 160), (255, 90, 26), (255, 99, 3), (1, 50, 1), (3, 50, 2)])
def test_brightness_formula(v, d, expected):
    assert brightness_transform(Image(np.array([[v]])), d).pixels[0, 0] == expected


@pytest.mark.parametrize("d", [-1, 100])
def test_brightness_out_of_range(scene, d):
    with pytest.raises(ValidationError):
        brightness_transform(scene, d)


@settings(max_examples=60, deadline=None)
@given(images, st.floats(0, 99), st.floats(0, 99))
def test_brightness_monotone(arr, d1, d2):
    d1, d2 = sorted((d1, d2))
    img = Image(arr)
    lo, hi = brightness_transform(img, d1), brightness_transform(img, d2)
    assert np.all(hi.pixels <= lo.pixels)


# -- specs and sequences -----------------------------------------------------


def test_transform_spec_validation():
    with pytest.raises(ValidationError):
        TransformSpec("blur", (0.5, 1.0))
    with pytest.raises(ValidationError):
        TransformSpec("blur", (0, 1.0, 1.0))
    with pytest.raises(ValidationError):
        TransformSpec("jpeg", (0, 99))
    with pytest.raises(ValidationError):
        TransformSpec("rotate", (0,))


@pytest.mark.parametrize("kind, count", [("blur", 10), ("jpeg", 14), ("brightness", 14)])
def test_default_sequences(scene, kind, count):
    seq = synthesize_sequence(scene, TransformSpec.default(kind), "s")
    assert len(seq.variants) == count == len(DEFAULT_AMOUNTS[kind])
    assert seq.variants[0].amount == 0 and seq.variants[0].image == scene
    assert all(v.homography.is_identity for v in seq.variants)
    assert [v.amount for v in seq.variants] == list(TransformSpec.default(kind).amounts)


def test_blur_defaults_match_published_range():
    assert TransformSpec.default("blur").amounts == tuple(0.5 * i for i in range(10))


def test_sequence_is_deterministic(scene):
    for kind in ("jpeg", "blur", "brightness"):
        a = synthesize_sequence(scene, TransformSpec.default(kind), "s")
        b = synthesize_sequence(scene, TransformSpec.default(kind), "s")
        assert [v.image.pixels.tobytes() for v in a.variants] == [v.image.pixels.tobytes() for v in b.variants]
        assert [v.encoded for v in a.variants] == [v.encoded for v in b.variants]


def test_cumulative_blur_reports_root_sum_square(scene):
    spec = TransformSpec("blur", (0, 1.0, 2.0), blur_mode="cumulative")
    seq = synthesize_sequence(scene, spec, "s")
    assert [v.effective_amount for v in seq.variants] == [0.0, 1.0, math.sqrt(5.0)]
    assert seq.variants[2].image == blur_transform(blur_transform(scene, 1.0), 2.0)


def test_textured_scene_deterministic():
    a = textured_scene(np.random.default_rng(3), 64, 48)
    b = textured_scene(np.random.default_rng(3), 64, 48)
    assert a == b and a.dims == (64, 48)


def test_encode_pgm_header():
    img = Image(np.array([[1, 2, 3]], np.uint8))
    assert encode_pgm(img) == b"P5\n3 1\n255\n\x01\x02\x03"
