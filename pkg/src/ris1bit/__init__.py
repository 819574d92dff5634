"""Simulation and synthesis toolkit for 1-bit reconfigurable reflectarrays."""

__version__ = "0.1.0"
