#!/usr/bin/env python3
"""Tabulate how fast the data-driven distribution approaches the idealized
and the limit distributions as the sample size grows."""

import sys
from pathlib import Path

from postselect.cli import main

CONFIG = Path(__file__).parent / "configs" / "convergence.ini"

if __name__ == "__main__":
    sys.exit(main(["convergence", "--config", str(CONFIG), *sys.argv[1:]]))
