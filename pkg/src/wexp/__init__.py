"""Weighted variations of Wiener processes and their second-order asymptotic expansions."""

__version__ = "0.1.0"
