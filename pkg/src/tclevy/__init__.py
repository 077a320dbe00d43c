"""Simulation and nonparametric estimation for time-changed NIG Lévy processes."""

__version__ = "0.1.0"
