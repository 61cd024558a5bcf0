"""Simulation, control and localization for a three-wheel wall-press in-pipe robot."""

__version__ = "0.1.0"
