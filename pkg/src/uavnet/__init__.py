"""Simulation and optimisation of UAV-assisted low-altitude wireless networks."""

__version__ = "0.1.0"
