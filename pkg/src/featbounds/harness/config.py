"""Run configuration: a TOML file, overridden by command-line flags."""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..detectors import DETECTORS
from ..errors import ValidationError
from ..imaging import BLUR_MODES, KINDS, TransformSpec
from ..mcnemar import DEFAULT_THRESHOLDS, validate_thresholds

IMAGE_SUFFIXES = (".pgm", ".png", ".jpg", ".jpeg")
RESERVED_NAMES = ("results", "report", "manifest.json", "timings.json")
KEYPOINT_FORMATS = ("csv", "oxford")

DEFAULTS: dict[str, Any] = {
    "database": {"scenes_root": None, "synthetic_scenes": 0, "synthetic_size": [192, 192], "seed": 0},
    "transforms": {"kinds": ["blur"], "blur_mode": "independent", "amounts": {}},
    "detectors": {"builtin": ["harris"], "params": {}, "external": {}},
    "evaluation": {"epsilon": 4.0, "scale_gate": False},
    "comparison": {"thresholds": list(DEFAULT_THRESHOLDS), "pairs": []},
    "output": {"dir": "featbounds-out", "jobs": 0},
}


@dataclass(frozen=True)
class ExternalDetector:
    name: str
    root: Path
    format: str
    filename: str


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    # -- typed accessors ---------------------------------------------------
    @property
    def out_dir(self) -> Path:
        return self._path(self.raw["output"]["dir"])

    @property
    def jobs(self) -> int:
        jobs = int(self.raw["output"]["jobs"])
        return jobs if jobs > 0 else (os.cpu_count() or 1)

    @property
    def seed(self) -> int:
        return int(self.raw["database"]["seed"])

    @property
    def scenes_root(self) -> Path | None:
        root = self.raw["database"]["scenes_root"]
        return None if root in (None, "") else self._path(root)

    @property
    def synthetic_scenes(self) -> int:
        return int(self.raw["database"]["synthetic_scenes"])

    @property
    def synthetic_size(self) -> tuple[int, int]:
        w, h = self.raw["database"]["synthetic_size"]
        return int(w), int(h)

    @property
    def epsilon(self) -> float:
        return float(self.raw["evaluation"]["epsilon"])

    @property
    def scale_gate(self) -> bool:
        return bool(self.raw["evaluation"]["scale_gate"])

    @property
    def thresholds(self) -> tuple[float, ...]:
        return validate_thresholds(self.raw["comparison"]["thresholds"])

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return [(str(a), str(b)) for a, b in self.raw["comparison"]["pairs"]]

    @property
    def builtin_detectors(self) -> list[str]:
        return list(self.raw["detectors"]["builtin"])

    @property
    def external_detectors(self) -> list[ExternalDetector]:
        out = []
        for name, spec in sorted(self.raw["detectors"]["external"].items()):
            fmt = spec.get("format", "csv")
            out.append(ExternalDetector(name, self._path(spec["root"]), fmt, spec.get("filename", f"keypoints.{fmt}")))
        return out

    @property
    def detector_ids(self) -> list[str]:
        return self.builtin_detectors + [e.name for e in self.external_detectors]

    def detector_params(self, name: str):
        params_cls = DETECTORS[name][1]
        return params_cls(**self.raw["detectors"]["params"].get(name, {}))

    def transform_specs(self) -> list[TransformSpec]:
        t = self.raw["transforms"]
        specs = []
        for kind in t["kinds"]:
            amounts = t["amounts"].get(kind)
            mode = t["blur_mode"] if kind == "blur" else "independent"
            if amounts is None:
                specs.append(TransformSpec.default(kind, blur_mode=mode))
            else:
                specs.append(TransformSpec(kind, tuple(amounts), blur_mode=mode))
        return specs

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    def echo(self) -> dict:
        """Config as recorded in the manifest; omits settings that cannot change artifacts."""
        echo = copy.deepcopy(self.raw)
        echo.pop("output", None)
        return echo

    # -- validation ----------------------------------------------------------
    def validate(self, need_scenes: bool = True) -> "RunConfig":
        db = self.raw["database"]
        if need_scenes:
            root = self.scenes_root
            if root is not None and not root.is_dir():
                raise ValidationError(f"scenes root {root} does not exist")
            if root is None and self.synthetic_scenes < 1:
                raise ValidationError("set database.scenes_root or database.synthetic_scenes")
        if int(db["synthetic_scenes"]) < 0:
            raise ValidationError("database.synthetic_scenes must be >= 0")
        w, h = self.synthetic_size
        if w < 32 or h < 32:
            raise ValidationError("database.synthetic_size must be at least 32x32")
        t = self.raw["transforms"]
        if not t["kinds"]:
            raise ValidationError("transforms.kinds is empty")
        for kind in t["kinds"]:
            if kind not in KINDS:
                raise ValidationError(f"unknown transform kind {kind!r}")
        if t["blur_mode"] not in BLUR_MODES:
            raise ValidationError(f"transforms.blur_mode must be one of {BLUR_MODES}")
        self.transform_specs()
        for name in self.builtin_detectors:
            if name not in DETECTORS:
                raise ValidationError(f"unknown built-in detector {name!r}; choose from {sorted(DETECTORS)}")
            try:
                self.detector_params(name)
            except TypeError as exc:
                raise ValidationError(f"detectors.params.{name}: {exc}") from exc
        for ext in self.external_detectors:
            if ext.name in DETECTORS:
                raise ValidationError(f"external detector {ext.name!r} shadows a built-in name")
            if ext.format not in KEYPOINT_FORMATS:
                raise ValidationError(f"detector {ext.name}: format must be one of {KEYPOINT_FORMATS}")
        ids = self.detector_ids
        if len(set(ids)) != len(ids):
            raise ValidationError("detector names must be unique")
        for name in ids:
            if not name or "/" in name or name.startswith("."):
                raise ValidationError(f"invalid detector name {name!r}")
        if not self.epsilon > 0:
            raise ValidationError("evaluation.epsilon must be > 0")
        self.thresholds
        for a, b in self.pairs:
            for d in (a, b):
                if d not in ids:
                    raise ValidationError(f"comparison pair names unknown detector {d!r}")
        if int(self.raw["output"]["jobs"]) < 0:
            raise ValidationError("output.jobs must be >= 0")
        return self


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ValidationError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and key not in ("amounts", "params", "external"):
            if not isinstance(val, dict):
                raise ValidationError(f"config key {where}{key} must be a table")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read TOML (optional), apply dotted-key ``overrides`` such as ``{"output.jobs": 4}``."""
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
        base_dir = path.resolve().parent
    merged = _merge(DEFAULTS, raw)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        merged[section][key] = value
    return RunConfig(merged, base_dir)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    return RunConfig(_merge(DEFAULTS, raw), base_dir or Path.cwd())
