"""Module execution hook: python -m cspnet ..."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
