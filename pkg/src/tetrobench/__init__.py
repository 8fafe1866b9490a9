"""Synthetic benchmarks for checking where feature-attribution methods put importance."""

__version__ = "0.1.0"
