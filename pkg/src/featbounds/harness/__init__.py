"""Orchestration: configuration, on-disk layout, manifests and reports."""

from .config import RunConfig, config_from_dict, load_config
from .heatmap import emit_heatmap, heatmap_pixels, z_to_pixel
from .manifest import RunManifest
from .pipeline import (
    cmd_compare,
    cmd_detect,
    cmd_evaluate,
    cmd_ingest,
    cmd_report,
    cmd_synthesize,
    cmd_verify,
    run_all,
)

__all__ = [
    "RunConfig",
    "RunManifest",
    "cmd_compare",
    "cmd_detect",
    "cmd_evaluate",
    "cmd_ingest",
    "cmd_report",
    "cmd_synthesize",
    "cmd_verify",
    "config_from_dict",
    "emit_heatmap",
    "heatmap_pixels",
    "load_config",
    "run_all",
    "z_to_pixel",
]
