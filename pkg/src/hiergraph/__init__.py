"""Hierarchical community graph retrieval and dynamically weighted multi-objective rewards."""

__version__ = "0.1.0"
