"""Conditional modes mixture models for clustering categorical data."""
__version__ = "0.1.0"
