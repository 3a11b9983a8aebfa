#!/usr/bin/env python3
"""Demonstrate the nonconvergence construction: two nodes whose curvatures
cancel leave the average pinned at or above its starting point while the
squared gradient norm stays above L^2/16 forever."""

import sys
from pathlib import Path

from localsgd.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(main(["verify", "--spec", str(ROOT / "specs" / "prop2.toml"),
                   *sys.argv[1:]]))
