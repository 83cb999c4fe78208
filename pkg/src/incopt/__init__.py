"""Incremental methods for finite-sum weakly convex optimization."""

__version__ = "0.1.0"
