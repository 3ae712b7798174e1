"""Desk-scale lab for MulT / GsiT fusion and their graph equivalents."""

__version__ = "0.1.0"
