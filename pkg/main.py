"""
Run the mfgap command line from a checkout

    uv run python main.py verify --config configs/smoke.toml
"""

import sys

from mfgap.cli import main

if __name__ == "__main__":
    sys.exit(main())
