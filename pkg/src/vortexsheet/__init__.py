"""Supersonic vortex sheets in three-dimensional steady isentropic Euler flow."""

__version__ = "0.1.0"
