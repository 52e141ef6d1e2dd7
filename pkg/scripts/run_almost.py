#!/usr/bin/env python3
"""Almost-retraction driver: rate checks plus the 1D blow-up scan."""

import sys

from splab.cli import main

if __name__ == "__main__":
    sys.exit(main(["almost", *sys.argv[1:]]))
