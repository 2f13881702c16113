"""Consistent stochastic forward mortality surfaces."""

__version__ = "0.1.0"
