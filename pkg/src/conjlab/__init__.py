"""Numerical laboratory for Erdős–Mordell-type constants and generalized
Fermat prime searches."""

__version__ = "0.1.0"
