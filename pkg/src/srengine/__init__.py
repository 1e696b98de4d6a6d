"""Simulation toolkit for a photonic quantum engine driven by a superradiant reservoir."""

__version__ = "0.1.0"
