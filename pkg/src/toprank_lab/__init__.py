"""Desk-scale laboratory for TopRank and its iterated-logarithm refinement."""

__version__ = "0.1.0"
