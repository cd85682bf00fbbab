"""Capacity analysis for populations of Gaussian AR classes."""

__version__ = "0.1.0"
