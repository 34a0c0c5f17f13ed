"""`python -m ansfield` defers to the pipeline CLI."""

from ansfield.harness.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
