"""Entropy-weighted correction of spatial survey bias for site prediction models."""

__version__ = "0.1.0"
