"""Stochastic and master-equation dynamics of a driven two-level system."""

__version__ = "0.1.0"
