"""Z-score grid to 8-bit image.

One pixel per cell: thresholds ascend top to bottom, amounts left to right.
Signed z is clamped to [-5, 5] and mapped affinely so that z = 0 is 128,
z = +5 is 255 and z = -5 is 1. The offset from 128 is rounded half away
from zero, which keeps the map symmetric about the midpoint. Unreliable
cells are drawn at 128 and listed separately.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..imaging import Image, encode_pgm, round_half_away
from ..mcnemar import ZScoreGrid

Z_CLAMP = 5.0
MID = 128
HALF_RANGE = 127

LEGEND = {
    "clamp": [-Z_CLAMP, Z_CLAMP],
    "mapping": "pixel = 128 + round_half_away_from_zero(clamp(z, -5, 5) / 5 * 127)",
    "z_zero": MID,
    "z_plus_5": MID + HALF_RANGE,
    "z_minus_5": MID - HALF_RANGE,
    "unreliable_value": MID,
    "rows": "thresholds, ascending top to bottom",
    "columns": "transformation amounts, ascending left to right",
    "sign": "positive z: detector_a outperformed detector_b",
}


def z_to_pixel(z) -> np.ndarray:
    z = np.clip(np.asarray(z, dtype=np.float64), -Z_CLAMP, Z_CLAMP)
    return (MID + round_half_away(z / Z_CLAMP * HALF_RANGE)).astype(np.uint8)


def heatmap_pixels(grid: ZScoreGrid) -> np.ndarray:
    pix = z_to_pixel(grid.z)
    pix[~grid.reliable] = MID
    return pix


def emit_heatmap(grid: ZScoreGrid, path: str | Path) -> dict[str, Path]:
    """Write ``<path>`` (PGM), plus ``*_legend.json`` and ``*_unreliable.json`` beside it."""
    path = Path(path)
    legend = dict(LEGEND, detector_a=grid.detector_a, detector_b=grid.detector_b,
                  thresholds=list(grid.thresholds), amounts=list(grid.amounts))
    legend_path = path.with_name(path.stem + "_legend.json")
    unreliable_path = path.with_name(path.stem + "_unreliable.json")
    path.write_bytes(encode_pgm(Image(heatmap_pixels(grid))))
    legend_path.write_text(json.dumps(legend, indent=2) + "\n")
    unreliable_path.write_text(json.dumps(grid.unreliable_cells(), indent=2) + "\n")
    return {"heatmap": path, "legend": legend_path, "unreliable": unreliable_path}
