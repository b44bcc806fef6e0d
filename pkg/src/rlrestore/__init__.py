"""Risk-limiting load restoration for microgrids with renewable uncertainty."""

__version__ = "0.1.0"
