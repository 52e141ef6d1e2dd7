#!/usr/bin/env python3
"""Threshold scan driver: layer ratio growth across the three regimes.

Prints the per-scale ratios for each (s, p) pair and the fitted slope;
pass extra CLI flags to override the defaults (see `spl threshold -h`).
"""

import sys

from splab.cli import main

if __name__ == "__main__":
    sys.exit(main(["threshold", *sys.argv[1:]]))
