"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig, load_config
from .errors import ConfigError, MissingArtifacts
from .prior import REGIMES

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("flutterbayes")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (INI key = value)")
    common.add_argument("--seed", type=int, help="run only this seed (overrides experiment.seeds)")
    common.add_argument("--out", type=Path, help="output directory (overrides experiment.output_dir)")
    common.add_argument("--regime", choices=REGIMES, action="append",
                        help="restrict to a prior regime (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for regime fan-out")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flutterbayes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("baseline", parents=[common], help="deterministic flutter study")
    sub.add_parser("gen-data", parents=[common], help="synthesize noisy free-decay records")
    sub.add_parser("build-prior", parents=[common], help="Monte Carlo modal priors")
    sub.add_parser("infer", parents=[common], help="adaptive Metropolis per regime")
    sub.add_parser("predict", parents=[common], help="flutter-speed posteriors")
    run_all = sub.add_parser("run-all", parents=[common], help="every stage, then the report")
    run_all.add_argument("--force", action="store_true", help="recompute stages whose outputs exist")
    sub.add_parser("report", parents=[common], help="tabulate a completed run")
    return parser


def _resolve(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.regime:
        changes["regimes"] = tuple(dict.fromkeys(args.regime))
    if changes:
        cfg = cfg.replace(**changes)
    out = args.out if args.out is not None else Path(cfg.output_dir)
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        out = args.out
        if out is None:
            try:
                out = Path(load_config(args.config).output_dir) if args.config else Path("run")
            except ConfigError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        try:
            files = pipeline.report(out)
        except MissingArtifacts as exc:
            print(f"report: {exc}", file=sys.stderr)
            return EXIT_STAGE
        print(files[0].read_text(), end="")
        return EXIT_OK

    try:
        cfg, out = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run-all":
            pipeline.run_all(cfg, out, threads=args.threads, resume=not args.force)
            print((out / "report.txt").read_text(), end="")
        elif args.command == "baseline":
            pipeline.run_stage(cfg, out, "baseline")
            print((out / "baseline" / "baseline.json").read_text(), end="")
        else:
            for seed in cfg.seeds:
                pipeline.run_stage(cfg, out, args.command, seed=seed, regimes=args.regime,
                                   threads=args.threads)
    except pipeline.StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
