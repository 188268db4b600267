"""tokenmark 진입점.

사용법: python -m tokenmark <command> [options]
"""

import sys

from tokenmark.cli import main

if __name__ == "__main__":
    sys.exit(main())
