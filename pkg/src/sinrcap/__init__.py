"""Network coding capacity of random SINR wireless networks."""

__version__ = "0.1.0"
