"""Pseudo-spectral Navier-Stokes solver with blow-up diagnostics."""

__version__ = "0.1.0"
