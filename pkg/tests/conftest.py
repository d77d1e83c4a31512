import numpy as np
import pytest

from featbounds import _kernels
from featbounds.imaging import Image, textured_scene

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def record_acceptance():
    def record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel backend."""
    monkeypatch.setattr(_kernels, "_ACTIVE", _kernels.kernels(request.param))
    return request.param


@pytest.fixture(scope="session")
def scene() -> Image:
    return textured_scene(np.random.default_rng(1234), 128, 128)


def square_image() -> Image:
    a = np.zeros((64, 64), np.uint8)
    a[16:48, 16:48] = 255
    return Image(a)


def checkerboard(cell: int = 8, size: int = 64) -> Image:
    yy, xx = np.mgrid[0:size, 0:size]
    return Image((((yy // cell) + (xx // cell)) % 2 * 255).astype(np.uint8))


def gaussian_blob(shape, cx, cy, sigma, amplitude=255.0):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma * sigma))


def smooth_gradient(size: int = 128) -> Image:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    vals = 40 + 0.8 * xx + 0.5 * yy + 12 * np.sin(xx / 17.0) * np.cos(yy / 23.0)
    return Image(np.clip(np.round(vals), 0, 255).astype(np.uint8))
