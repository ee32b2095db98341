"""Frontier-hierarchy exploration with retrospective experience replay on a 2D grid world."""

__version__ = "0.1.0"
