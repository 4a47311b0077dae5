"""Coherent optical satellite uplink simulation with HPOA Kerr nonlinearity."""

__version__ = "0.1.0"
