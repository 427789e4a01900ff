#!/usr/bin/env python3
"""Emit the four-panel density curves and their selection weights.

Writes one CSV per panel (columns: t, both unconditional densities, the two
conditional densities, and the two reference Gaussians) plus the sidecar
weight table.  Plot-ready output; no rendering here.
"""

import sys
from pathlib import Path

from postselect.cli import main

CONFIG = Path(__file__).parent / "configs" / "density_panels.ini"

if __name__ == "__main__":
    sys.exit(main(["curves", "--config", str(CONFIG), *sys.argv[1:]]))
