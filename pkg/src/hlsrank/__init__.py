"""Pairwise graph-neural ranking of HLS pragma designs with two-stage DSE."""

__version__ = "0.1.0"
