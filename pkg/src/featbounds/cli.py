"""Command-line entry point: ``featbounds <subcommand> [--config FILE] ...``.

Exit codes: 0 success, 1 validation error, 2 runtime or I/O error,
3 internal invariant violation (including a failed ``verify``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import FeatboundsError, InvariantError, ValidationError
from .harness import config as config_mod
from .harness import pipeline

log = logging.getLogger("featbounds")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output directory (output.dir)")
    common.add_argument("--jobs", type=int, help="worker threads; 0 = all processors (output.jobs)")
    common.add_argument("--seed", type=int, help="seed for synthetic scenes (database.seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="featbounds", description="Repeatability bounds and McNemar comparison of local feature detectors.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common], help="build transformed sequences from reference images")
    sub.add_parser("detect", parents=[common], help="run built-in detectors and ingest external keypoints")
    sub.add_parser("ingest", parents=[common], help="validate and import external keypoint files")
    sub.add_parser("evaluate", parents=[common], help="repeatability matrices, curves and region areas")
    cmp = sub.add_parser("compare", parents=[common], help="threshold-swept McNemar grids and heatmaps")
    cmp.add_argument("--a", dest="detector_a", help="first detector (positive z means it wins)")
    cmp.add_argument("--b", dest="detector_b", help="second detector")
    sub.add_parser("report", parents=[common], help="summarise curves, areas and comparisons")
    sub.add_parser("verify", parents=[common], help="check the output directory against the manifest")
    sub.add_parser("run", parents=[common], help="synthesize, detect, evaluate, compare and report")
    return parser


def _config(args) -> config_mod.RunConfig:
    overrides = {
        "output.dir": str(args.out.resolve()) if args.out else None,
        "output.jobs": args.jobs,
        "database.seed": args.seed,
    }
    return config_mod.load_config(args.config, overrides)


def dispatch(args) -> int:
    cfg = _config(args)
    cmd = args.command
    if cmd == "verify":
        problems = pipeline.cmd_verify(cfg)
        for p in problems:
            print(p)
        if problems:
            raise InvariantError(f"{len(problems)} inventory problem(s) in {cfg.out_dir}")
        print(f"ok: {cfg.out_dir} matches its manifest")
        return EXIT_OK
    if cmd == "compare":
        pipeline.cmd_compare(cfg, args.detector_a, args.detector_b)
    else:
        {
            "synthesize": pipeline.cmd_synthesize,
            "detect": pipeline.cmd_detect,
            "ingest": pipeline.cmd_ingest,
            "evaluate": pipeline.cmd_evaluate,
            "report": pipeline.cmd_report,
            "run": pipeline.run_all,
        }[cmd](cfg)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FeatboundsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
