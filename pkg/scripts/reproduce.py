"""Run every convergence panel and the eps sweeps, writing CSV and SVG files.

    python scripts/reproduce.py out/            # default ladders, about 8 minutes
    python scripts/reproduce.py out/ --quick    # tiny ladders, a few seconds
"""
import argparse
import json
import os
import sys
import tempfile

from vemcip.cli import run

QUICK = {"octag_levels": [2, 4, 8], "voro_levels": [16, 64, 256], "robustness_cells": 64}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    argv = ["reproduce", "--out", args.out, "--threads", str(args.threads), "-v"]
    if args.quick:
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump(QUICK, fh)
        argv += ["--config", fh.name]
        try:
            return run(argv)
        finally:
            os.unlink(fh.name)
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
