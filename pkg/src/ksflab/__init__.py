"""Pseudospectral laboratory for consumption Keller-Segel and Keller-Segel-fluid systems."""

__version__ = "0.1.0"
