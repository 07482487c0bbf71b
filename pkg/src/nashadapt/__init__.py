"""Distributed Nash equilibrium seeking for high-order agents with unknown dynamics."""

__version__ = "0.1.0"
