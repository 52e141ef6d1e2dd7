#!/usr/bin/env python3
"""Run the full experiment pipeline with the acceptance configuration."""

import sys
from pathlib import Path

from splab.cli import main

if __name__ == "__main__":
    cfg = Path(__file__).parent / "acceptance.json"
    sys.exit(main(["suite", "--config", str(cfg), *sys.argv[1:]]))
