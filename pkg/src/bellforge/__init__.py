"""Simulation and analysis toolkit for nonlocal games and Bell inequality violations."""

__version__ = "0.1.0"
