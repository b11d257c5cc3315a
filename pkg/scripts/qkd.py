#!/usr/bin/env python3
"""
Run the QKD simulator from a checkout without installing it.

Usage:
    ./scripts/qkd.py run --protocol bb84 --noise 0.05 --seed 42
    ./scripts/qkd.py sweep --protocol b92 --noise 0:0.2:0.02 --eve 0:0.1:0.01 --mode oracle
    ./scripts/qkd.py replay tests/regression/table3_b92.csv
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from qkdsim.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
