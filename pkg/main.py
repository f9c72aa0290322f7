"""Entry point for running pistonlab from a source checkout."""

import sys

from pistonlab.cli import main

if __name__ == "__main__":
    sys.exit(main())
