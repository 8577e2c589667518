"""Boundary-element electrostatics and noise analysis for chip-based 3D Paul traps."""

__version__ = "0.1.0"
