"""Quantum geometric tensor laboratory for quenched spin chains."""

__version__ = "0.1.0"
