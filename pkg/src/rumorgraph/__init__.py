"""Rumor classification over tweet propagation graphs."""

__version__ = "0.1.0"
