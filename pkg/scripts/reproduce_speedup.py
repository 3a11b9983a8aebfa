#!/usr/bin/env python3
"""Reproduce the local-step speedup sweep on the heterogeneous quadratic.

Writes per-run traces, per-K mean traces and speedup.csv under
results/quadratic_sweep. Pass --jobs N to parallelize; outputs are
byte-identical for any worker count.
"""

import sys
from pathlib import Path

from localsgd.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(main(["sweep", "--spec", str(ROOT / "specs" / "quadratic_sweep.toml"),
                   *sys.argv[1:]]))
