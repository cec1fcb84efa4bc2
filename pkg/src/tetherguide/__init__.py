"""Simulation and numerical verification of a cable-tethered aerial guide for a walking human."""

__version__ = "0.1.0"
