#!/usr/bin/env python3
"""Run the million-replication oracle and report its distance to the
analytic cdf together with the selection frequencies."""

import sys
from pathlib import Path

from postselect.cli import main

CONFIG = Path(__file__).parent / "configs" / "simulation_check.ini"

if __name__ == "__main__":
    sys.exit(main(["simulate", "--config", str(CONFIG), *sys.argv[1:]]))
