"""Run the full-length synthetic experiment and print the report.

    python3 scripts/run_full_experiment.py [--config configs/full.ini] [--out DIR]
"""

import argparse
import sys
from pathlib import Path

from flutterbayes.cli import main

ROOT = Path(__file__).resolve().parents[1]


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "full.ini"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    argv = ["run-all", "--config", args.config, "--threads", str(args.threads)]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(main(argv))
