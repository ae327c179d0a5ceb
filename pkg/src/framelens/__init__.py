"""Coarse-to-fine dual-encoder frame identification at desk scale."""

__version__ = "0.1.0"
