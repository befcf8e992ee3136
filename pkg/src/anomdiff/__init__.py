"""Simulation and analysis of anomalous diffusion in dissipative optical lattices."""

__version__ = "0.1.0"
