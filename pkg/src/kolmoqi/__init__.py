"""Kolmogorov diffusions on Wiener space: exact laws, Harnack-type bounds and their numerical checks."""

__version__ = "0.1.0"
