from .main import cli, kidot, run

__all__ = ["cli", "kidot", "run"]
