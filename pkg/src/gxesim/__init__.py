"""Simulation and power analysis for confounded gene-environment interaction scans."""

__version__ = "0.1.0"
