#!/usr/bin/env python3
"""Averaging experiment driver: Monte Carlo shift average of projected energies."""

import sys

from splab.cli import main

if __name__ == "__main__":
    sys.exit(main(["averaging", *sys.argv[1:]]))
