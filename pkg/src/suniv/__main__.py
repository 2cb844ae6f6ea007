"""Module entry point for ``python3 -m suniv``."""

import sys

from suniv.experiments import main

if __name__ == "__main__":
    sys.exit(main())
