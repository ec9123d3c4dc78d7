"""Phase-field homogenization toolkit."""

__version__ = "0.1.0"
