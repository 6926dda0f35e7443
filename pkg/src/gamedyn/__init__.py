"""Best-response dynamics in games and their contraction-based analysis."""

__version__ = "0.1.0"
