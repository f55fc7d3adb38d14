"""Entry script: ``python main.py <command> ...`` runs the parcellation CLI."""

import sys

from logit_parcellation.cli import main

if __name__ == "__main__":
    sys.exit(main())
