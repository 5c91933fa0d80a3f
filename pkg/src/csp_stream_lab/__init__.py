"""Finite-scale toolkit for streaming Max-CSP lower-bound machinery over Z_q."""

__version__ = "0.1.0"
