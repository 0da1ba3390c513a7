"""Empirical coordination over a memoryless channel with feedback."""

__version__ = "0.1.0"
