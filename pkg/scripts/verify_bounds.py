#!/usr/bin/env python3
"""Run the built-in verification battery and exit with its status."""

import sys
from pathlib import Path

from localsgd.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(main(["verify", "--spec", str(ROOT / "specs" / "verify_default.toml"),
                   *sys.argv[1:]]))
