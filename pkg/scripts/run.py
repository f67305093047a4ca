#!/usr/bin/env python3
"""
Run the kidot command line from a source checkout
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from services.cli.main import cli  # noqa: E402


if __name__ == "__main__":
    sys.exit(cli())
