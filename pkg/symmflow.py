"""Top-level entry point; equivalent to the ``symmflow`` console script."""

from cli.main import run

if __name__ == "__main__":
    run()
