"""Certification of completely positive contractive projections and the C*-structure of their ranges."""

__version__ = "0.1.0"
