"""Simulation and stability analysis of a hydropower unit with speed governor."""
__version__ = "0.1.0"
