"""Càdlàg rough-path calculus and a solver for rough functional differential equations."""

__version__ = "0.1.0"
