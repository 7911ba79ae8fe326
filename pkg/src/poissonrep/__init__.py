"""Simulation and exact tools for Poisson-representable random sets on Z^d."""

__version__ = "0.1.0"
