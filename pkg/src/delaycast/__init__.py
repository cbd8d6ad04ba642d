"""Flight arrival-delay decomposition and multi-output regression toolkit."""

__version__ = "0.1.0"
