"""Allow ``python -m itergraph``."""

import sys

from itergraph.cli import main

if __name__ == "__main__":
    sys.exit(main())
