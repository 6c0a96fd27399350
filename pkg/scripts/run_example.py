"""Run one of the reference configurations.

Usage: python scripts/run_example.py {1,2,2-gamma0} [extra KEY=VALUE ...]
"""

import sys
from pathlib import Path

from sparsessn.cli import main

CONFIGS = Path(__file__).resolve().parent / "configs"
NAMES = {"1": "example1.cfg", "2": "example2.cfg", "2-gamma0": "example2_gamma0.cfg"}

if __name__ == "__main__":
    if len(sys.argv) < 2 or sys.argv[1] not in NAMES:
        sys.exit(__doc__.strip())
    extra = [a for kv in sys.argv[2:] for a in ("--set", kv)]
    sys.exit(main([str(CONFIGS / NAMES[sys.argv[1]])] + extra))
