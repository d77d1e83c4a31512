"""Run manifest: file inventory with checksums and per-stage input digests.

Wall-clock timings live in a sidecar (``timings.json``) so that reruns
produce byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"
UNTRACKED = (MANIFEST_NAME, TIMINGS_NAME)
FORMAT = "featbounds-run/1"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def digest(obj: Any) -> str:
    return sha256_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


class RunManifest:
    def __init__(self, out_dir: Path, data: dict | None = None):
        self.out_dir = Path(out_dir)
        self.data = data or {"format": FORMAT, "config": {}, "codec": None, "stages": {}, "files": {},
                             "excluded_scenes": {}, "areas": {}}

    @classmethod
    def load(cls, out_dir: Path) -> "RunManifest":
        path = Path(out_dir) / MANIFEST_NAME
        if path.exists():
            return cls(out_dir, json.loads(path.read_text()))
        return cls(out_dir)

    def save(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / MANIFEST_NAME).write_text(canonical_json(self.data))

    @property
    def files(self) -> dict[str, str]:
        return self.data["files"]

    def stage_files(self, stage: str) -> list[str]:
        return list(self.data["stages"].get(stage, {}).get("files", []))

    def stage_is_current(self, stage: str, input_digest: str) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry or entry.get("input_digest") != input_digest:
            return False
        for rel in entry["files"]:
            p = self.out_dir / rel
            if not p.is_file() or sha256_file(p) != self.files.get(rel):
                return False
        return True

    def record_stage(self, stage: str, input_digest: str, written: dict[str, str]) -> None:
        """Replace the stage's file list; drop files it produced last time but not now."""
        for rel in self.stage_files(stage):
            if rel not in written:
                self.files.pop(rel, None)
                stale = self.out_dir / rel
                if stale.is_file():
                    stale.unlink()
        self.files.update(written)
        self.data["files"] = dict(sorted(self.files.items()))
        self.data["stages"][stage] = {"input_digest": input_digest, "files": sorted(written)}

    def checksums_for(self, stages: Iterable[str]) -> list[tuple[str, str]]:
        out = []
        for stage in stages:
            out += [(rel, self.files[rel]) for rel in self.stage_files(stage)]
        return sorted(out)

    def verify(self) -> list[str]:
        """Problems found comparing the inventory with the output directory (empty = consistent)."""
        problems = []
        for rel, sha in sorted(self.files.items()):
            p = self.out_dir / rel
            if not p.is_file():
                problems.append(f"missing: {rel}")
            elif sha256_file(p) != sha:
                problems.append(f"checksum mismatch: {rel}")
        if self.out_dir.is_dir():
            for p in sorted(self.out_dir.rglob("*")):
                if p.is_file():
                    rel = p.relative_to(self.out_dir).as_posix()
                    if rel not in self.files and rel not in UNTRACKED:
                        problems.append(f"unlisted: {rel}")
        return problems


def write_timings(out_dir: Path, stage: str, seconds: float, skipped: bool) -> None:
    path = Path(out_dir) / TIMINGS_NAME
    data = json.loads(path.read_text()) if path.exists() else {}
    data[stage] = {"seconds": round(seconds, 6), "skipped": skipped}
    path.write_text(canonical_json(data))
