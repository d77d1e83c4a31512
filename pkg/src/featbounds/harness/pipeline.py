"""Pipeline stages: synthesize, detect, ingest, evaluate, compare, report, verify.

Layout under the output directory::

    <scene_id>/<transform>/sequence.json
    <scene_id>/<transform>/<amount>/image.pgm | image.jpg
    <scene_id>/<transform>/<amount>/keypoints_<detector>.csv
    results/<transform>/<detector>/{matrix.csv, excluded.json, curves.csv}
    results/<transform>/<a>_vs_<b>/{grid.csv, heatmap.pgm, heatmap_legend.json, heatmap_unreliable.json}
    report/{summary.json, summary.txt}
    manifest.json, timings.json

Workers only compute; the calling thread writes every file, in scene order,
so the number of jobs never changes an artifact.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..bounds import compute_bounds
from ..detectors import DETECTORS, format_csv_keypoints, ingest_keypoints
from ..errors import ValidationError
from ..geometry import Homography
from ..imaging import (
    Image,
    SceneSequence,
    TransformSpec,
    Variant,
    amounts_label,
    codec_id,
    encode_pgm,
    load_image,
    synthesize_sequence,
    textured_scene,
)
from ..mcnemar import z_grid
from ..repeatability import RepeatabilityMatrix, build_matrix
from .config import IMAGE_SUFFIXES, RESERVED_NAMES, RunConfig
from .heatmap import emit_heatmap
from .manifest import RunManifest, canonical_json, digest, sha256_bytes, write_timings

log = logging.getLogger("featbounds")

SEQUENCE_FILE = "sequence.json"


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write(out_dir: Path, rel: str, data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode()
    path = out_dir / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return sha256_bytes(data)


@contextmanager
def _stage(cfg: RunConfig, name: str):
    t0 = time.perf_counter()
    state = {"skipped": False}
    yield state
    elapsed = time.perf_counter() - t0
    write_timings(cfg.out_dir, name, elapsed, state["skipped"])
    log.info("%s: %s in %.2fs", name, "up to date" if state["skipped"] else "done", elapsed)


def _json_float(v: float):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _sources(cfg: RunConfig) -> list[tuple[str, Path | int]]:
    root = cfg.scenes_root
    if root is None:
        return [(f"synthetic_{i:03d}", i) for i in range(cfg.synthetic_scenes)]
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ValidationError(f"no reference images (.pgm/.png/.jpg) in {root}")
    seen: dict[str, Path] = {}
    for p in files:
        if p.stem in seen:
            raise ValidationError(f"two reference images share the scene id {p.stem!r}")
        if p.stem in RESERVED_NAMES or p.stem.startswith("."):
            raise ValidationError(f"reference image name {p.name!r} is reserved")
        seen[p.stem] = p
    return sorted(seen.items())


def _reference(cfg: RunConfig, source: Path | int) -> Image:
    if isinstance(source, Path):
        return load_image(source)
    w, h = cfg.synthetic_size
    return textured_scene(np.random.default_rng([cfg.seed, source]), w, h)


def _sequence_files(seq: SceneSequence, spec: TransformSpec) -> list[tuple[str, bytes]]:
    files = []
    entries = []
    for k, var in enumerate(seq.variants):
        label = amounts_label(var.amount)
        if var.encoded is not None:
            name, data = f"{label}/image.jpg", var.encoded
        else:
            name, data = f"{label}/image.pgm", encode_pgm(var.image)
        files.append((f"{seq.scene_id}/{seq.kind}/{name}", data))
        entries.append(
            {
                "index": k,
                "amount": var.amount,
                "effective_amount": var.effective_amount,
                "file": name,
                "homography": var.homography.entries(),
            }
        )
    meta = {
        "scene_id": seq.scene_id,
        "transform": seq.kind,
        "blur_mode": spec.blur_mode if spec.kind == "blur" else None,
        "codec": codec_id() if spec.kind == "jpeg" else None,
        "dims": list(seq.reference.dims),
        "amounts": list(spec.amounts),
        "variants": entries,
    }
    files.append((f"{seq.scene_id}/{seq.kind}/{SEQUENCE_FILE}", canonical_json(meta).encode()))
    return files


def cmd_synthesize(cfg: RunConfig) -> RunManifest:
    cfg.validate()
    sources = _sources(cfg)
    specs = cfg.transform_specs()
    manifest = RunManifest.load(cfg.out_dir)
    source_ids = [(sid, sha256_bytes(src.read_bytes()) if isinstance(src, Path) else src) for sid, src in sources]
    key = digest({"database": cfg.echo()["database"], "transforms": cfg.echo()["transforms"],
                  "sources": source_ids, "codec": codec_id()})
    with _stage(cfg, "synthesize") as st:
        if manifest.stage_is_current("synthesize", key):
            st["skipped"] = True
            return manifest

        def work(item):
            sid, src = item
            ref = _reference(cfg, src)
            out = []
            for spec in specs:
                out += _sequence_files(synthesize_sequence(ref, spec, sid), spec)
            return out

        written = {}
        for files in _pmap(work, sources, cfg.jobs):
            for rel, data in files:
                written[rel] = _write(cfg.out_dir, rel, data)
        manifest.data["config"] = cfg.echo()
        manifest.data["codec"] = codec_id()
        manifest.data["scenes"] = [sid for sid, _ in sources]
        manifest.data["transforms"] = [s.kind for s in specs]
        manifest.record_stage("synthesize", key, written)
        manifest.save()
    return manifest


# ---------------------------------------------------------------------------
# sequences on disk
# ---------------------------------------------------------------------------


def _require(manifest: RunManifest, stage: str, hint: str) -> None:
    if stage not in manifest.data["stages"]:
        raise ValidationError(f"no {stage} output in {manifest.out_dir}; run '{hint}' first")


def read_sequence_meta(out_dir: Path, scene_id: str, kind: str) -> dict:
    path = out_dir / scene_id / kind / SEQUENCE_FILE
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"missing sequence manifest {path}") from None


def load_sequence(out_dir: Path, scene_id: str, kind: str) -> SceneSequence:
    meta = read_sequence_meta(out_dir, scene_id, kind)
    base = out_dir / scene_id / kind
    variants = []
    for v in meta["variants"]:
        img = load_image(base / v["file"])
        variants.append(Variant(float(v["amount"]), img, Homography.from_entries(v["homography"]),
                                None, v.get("effective_amount")))
    return SceneSequence(scene_id, variants[0].image, kind, tuple(variants))


def _scenes_and_kinds(manifest: RunManifest) -> tuple[list[str], list[str]]:
    return list(manifest.data.get("scenes", [])), list(manifest.data.get("transforms", []))


def keypoint_rel(scene_id: str, kind: str, amount: float, detector: str) -> str:
    return f"{scene_id}/{kind}/{amounts_label(amount)}/keypoints_{detector}.csv"


# ---------------------------------------------------------------------------
# detect / ingest
# ---------------------------------------------------------------------------


def _run_builtin(cfg: RunConfig, manifest: RunManifest) -> None:
    scenes, kinds = _scenes_and_kinds(manifest)
    names = cfg.builtin_detectors
    params = {n: cfg.detector_params(n) for n in names}
    key = digest({"detectors": {n: params[n].to_dict() for n in names},
                  "inputs": manifest.checksums_for(["synthesize"])})
    with _stage(cfg, "detect") as st:
        if manifest.stage_is_current("detect", key):
            st["skipped"] = True
            return

        def work(sid):
            out = []
            for kind in kinds:
                meta = read_sequence_meta(cfg.out_dir, sid, kind)
                for v in meta["variants"]:
                    img = load_image(cfg.out_dir / sid / kind / v["file"])
                    for name in names:
                        fn = DETECTORS[name][0]
                        kps = fn(img, params[name], detector_id=name, image_ref=(sid, v["index"]))
                        out.append((keypoint_rel(sid, kind, v["amount"], name), format_csv_keypoints(kps)))
            return out

        written = {}
        for files in _pmap(work, scenes, cfg.jobs):
            for rel, text in files:
                written[rel] = _write(cfg.out_dir, rel, text)
        manifest.record_stage("detect", key, written)
        manifest.save()


def _run_ingest(cfg: RunConfig, manifest: RunManifest) -> None:
    scenes, kinds = _scenes_and_kinds(manifest)
    externals = cfg.external_detectors
    for ext in externals:
        if not ext.root.is_dir():
            raise ValidationError(f"external keypoint root {ext.root} does not exist")
    tasks = []
    for ext in externals:
        for sid in scenes:
            for kind in kinds:
                meta = read_sequence_meta(cfg.out_dir, sid, kind)
                dims = tuple(meta["dims"])
                for v in meta["variants"]:
                    src = ext.root / sid / kind / amounts_label(v["amount"]) / ext.filename
                    tasks.append((ext, sid, kind, v, dims, src))
    sources = []
    for ext, sid, kind, v, dims, src in tasks:
        if not src.is_file():
            raise ValidationError(f"missing external keypoint file {src}")
        sources.append((ext.name, src.relative_to(ext.root).as_posix(), sha256_bytes(src.read_bytes())))
    raw_ext = cfg.echo()["detectors"]["external"]
    key = digest({"external": raw_ext, "sources": sources, "inputs": manifest.checksums_for(["synthesize"])})
    with _stage(cfg, "ingest") as st:
        if manifest.stage_is_current("ingest", key):
            st["skipped"] = True
            return

        def work(task):
            ext, sid, kind, v, dims, src = task
            kps = ingest_keypoints(src, ext.format, ext.name, (sid, v["index"]), dims)
            return keypoint_rel(sid, kind, v["amount"], ext.name), format_csv_keypoints(kps)

        written = {}
        for rel, text in _pmap(work, tasks, cfg.jobs):
            written[rel] = _write(cfg.out_dir, rel, text)
        manifest.record_stage("ingest", key, written)
        manifest.save()


def cmd_detect(cfg: RunConfig) -> RunManifest:
    cfg.validate(need_scenes=False)
    manifest = RunManifest.load(cfg.out_dir)
    _require(manifest, "synthesize", "synthesize")
    _run_builtin(cfg, manifest)
    if cfg.external_detectors:
        _run_ingest(cfg, manifest)
    return manifest


def cmd_ingest(cfg: RunConfig) -> RunManifest:
    cfg.validate(need_scenes=False)
    manifest = RunManifest.load(cfg.out_dir)
    _require(manifest, "synthesize", "synthesize")
    if not cfg.external_detectors:
        raise ValidationError("no external detectors configured under [detectors.external]")
    _run_ingest(cfg, manifest)
    return manifest


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def result_dir(kind: str, name: str) -> str:
    return f"results/{kind}/{name}"


def cmd_evaluate(cfg: RunConfig) -> RunManifest:
    cfg.validate(need_scenes=False)
    manifest = RunManifest.load(cfg.out_dir)
    _require(manifest, "synthesize", "synthesize")
    scenes, kinds = _scenes_and_kinds(manifest)
    dets = cfg.detector_ids
    key = digest({"evaluation": cfg.echo()["evaluation"], "detectors": dets,
                  "inputs": manifest.checksums_for(["synthesize", "detect", "ingest"])})
    with _stage(cfg, "evaluate") as st:
        if manifest.stage_is_current("evaluate", key):
            st["skipped"] = True
            return manifest
        written = {}
        for kind in kinds:
            seqs = _pmap(lambda sid: load_sequence(cfg.out_dir, sid, kind), scenes, cfg.jobs)
            for det in dets:
                kps = {}
                for seq in seqs:
                    for k, var in enumerate(seq.variants):
                        path = cfg.out_dir / keypoint_rel(seq.scene_id, kind, var.amount, det)
                        if not path.is_file():
                            raise ValidationError(f"missing keypoints {path}; run 'detect' first")
                        kps[(seq.scene_id, k)] = ingest_keypoints(path, "csv", det, (seq.scene_id, k), var.image.dims)
                matrix = build_matrix(seqs, kps, cfg.epsilon, det, cfg.scale_gate)
                if not matrix.scene_ids:
                    raise ValidationError(f"{det}/{kind}: every scene has an empty reference")
                curves = compute_bounds(matrix)
                base = result_dir(kind, det)
                written[f"{base}/matrix.csv"] = _write(cfg.out_dir, f"{base}/matrix.csv", matrix.to_csv())
                written[f"{base}/excluded.json"] = _write(cfg.out_dir, f"{base}/excluded.json", matrix.excluded_json())
                written[f"{base}/curves.csv"] = _write(cfg.out_dir, f"{base}/curves.csv", curves.to_csv())
                tag = f"{kind}/{det}"
                manifest.data["areas"][tag] = {k: _json_float(v) for k, v in curves.areas().items()}
                manifest.data["excluded_scenes"][tag] = sorted(matrix.excluded)
        manifest.record_stage("evaluate", key, written)
        manifest.save()
    return manifest


def load_matrix(out_dir: Path, kind: str, det: str) -> RepeatabilityMatrix:
    base = out_dir / result_dir(kind, det)
    if not (base / "matrix.csv").is_file():
        raise ValidationError(f"no repeatability matrix for {det}/{kind}; run 'evaluate' first")
    return RepeatabilityMatrix.load(base / "matrix.csv", base / "excluded.json", det, kind)


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def cmd_compare(cfg: RunConfig, detector_a: str | None = None, detector_b: str | None = None) -> RunManifest:
    cfg.validate(need_scenes=False)
    if (detector_a is None) != (detector_b is None):
        raise ValidationError("give both detectors to compare, or neither")
    pairs = [(detector_a, detector_b)] if detector_a else cfg.pairs
    if not pairs:
        raise ValidationError("no detector pairs to compare; set comparison.pairs or pass --a/--b")
    manifest = RunManifest.load(cfg.out_dir)
    _require(manifest, "evaluate", "evaluate")
    _, kinds = _scenes_and_kinds(manifest)
    thresholds = cfg.thresholds
    for a, b in pairs:
        if a == b:
            raise ValidationError("cannot compare a detector with itself")
        stage = f"compare:{a}_vs_{b}"
        key = digest({"thresholds": list(thresholds), "pair": [a, b],
                      "inputs": manifest.checksums_for(["evaluate"])})
        with _stage(cfg, stage) as st:
            if manifest.stage_is_current(stage, key):
                st["skipped"] = True
                continue
            written = {}
            for kind in kinds:
                grid = z_grid(load_matrix(cfg.out_dir, kind, a), load_matrix(cfg.out_dir, kind, b), thresholds)
                base = result_dir(kind, f"{a}_vs_{b}")
                written[f"{base}/grid.csv"] = _write(cfg.out_dir, f"{base}/grid.csv", grid.to_csv())
                (cfg.out_dir / base).mkdir(parents=True, exist_ok=True)
                for path in emit_heatmap(grid, cfg.out_dir / base / "heatmap.pgm").values():
                    rel = path.relative_to(cfg.out_dir).as_posix()
                    written[rel] = sha256_bytes(path.read_bytes())
            manifest.record_stage(stage, key, written)
            manifest.save()
    return manifest


# ---------------------------------------------------------------------------
# report / verify
# ---------------------------------------------------------------------------


def _read_csv_rows(path: Path) -> list[list[str]]:
    return [line.split(",") for line in path.read_text().splitlines()]


def cmd_report(cfg: RunConfig) -> RunManifest:
    cfg.validate(need_scenes=False)
    manifest = RunManifest.load(cfg.out_dir)
    _require(manifest, "evaluate", "evaluate")
    _, kinds = _scenes_and_kinds(manifest)
    compare_stages = sorted(s for s in manifest.data["stages"] if s.startswith("compare:"))
    key = digest({"inputs": manifest.checksums_for(["evaluate", *compare_stages])})
    with _stage(cfg, "report") as st:
        if manifest.stage_is_current("report", key):
            st["skipped"] = True
            return manifest
        summary: dict = {"detectors": {}, "comparisons": {}}
        lines = ["transform  detector  scenes  excluded  operating_area  guarantee_area"]
        for kind in kinds:
            summary["detectors"][kind] = {}
            for det in cfg.detector_ids:
                tag = f"{kind}/{det}"
                if tag not in manifest.data["areas"]:
                    continue
                matrix = load_matrix(cfg.out_dir, kind, det)
                curves = compute_bounds(matrix)
                areas = manifest.data["areas"][tag]
                summary["detectors"][kind][det] = {
                    "scenes": len(matrix.scene_ids),
                    "excluded": list(matrix.excluded),
                    "amounts": list(curves.amounts),
                    "max_curve": list(curves.max_curve),
                    "median_curve": list(curves.median_curve),
                    "min_curve": list(curves.min_curve),
                    **areas,
                }
                lines.append(
                    f"{kind}  {det}  {len(matrix.scene_ids)}  {len(matrix.excluded)}  "
                    f"{areas['operating_area']}  {areas['guarantee_area']}"
                )
            summary["comparisons"][kind] = {}
            for stage in compare_stages:
                pair = stage.split(":", 1)[1]
                grid_path = cfg.out_dir / result_dir(kind, pair) / "grid.csv"
                if not grid_path.is_file():
                    continue
                rows = _read_csv_rows(grid_path)[1:]
                z = np.array([float(r[2]) for r in rows])
                rel = np.array([r[3] == "true" for r in rows])
                summary["comparisons"][kind][pair] = {
                    "cells": len(rows),
                    "reliable_cells": int(rel.sum()),
                    "first_better_reliable": int(np.sum(rel & (z > 0))),
                    "second_better_reliable": int(np.sum(rel & (z < 0))),
                    "max_abs_z": float(np.max(np.abs(z))) if len(z) else 0.0,
                }
        written = {
            "report/summary.json": _write(cfg.out_dir, "report/summary.json", canonical_json(summary)),
            "report/summary.txt": _write(cfg.out_dir, "report/summary.txt", "\n".join(lines) + "\n"),
        }
        manifest.record_stage("report", key, written)
        manifest.save()
    return manifest


def cmd_verify(cfg: RunConfig) -> list[str]:
    manifest_path = cfg.out_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"no manifest in {cfg.out_dir}")
    return RunManifest.load(cfg.out_dir).verify()


def run_all(cfg: RunConfig) -> RunManifest:
    cmd_synthesize(cfg)
    cmd_detect(cfg)
    cmd_evaluate(cfg)
    if cfg.pairs:
        cmd_compare(cfg)
    return cmd_report(cfg)

