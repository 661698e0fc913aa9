"""Split-trust committee blockchain: protocols, bounds, and simulator."""

__version__ = "0.1.0"
