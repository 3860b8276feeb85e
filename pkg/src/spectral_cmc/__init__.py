"""Spectral data and flows of CMC surfaces in the 3-sphere built from tori."""

__version__ = "0.1.0"
