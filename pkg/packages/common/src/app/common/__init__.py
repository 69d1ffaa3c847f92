"""Shared settings and logging for the FourNet packages"""

__version__ = "0.1.0"
