"""Entry point for ``python -m seqadapter``."""

from .server import main

if __name__ == "__main__":
    raise SystemExit(main())
