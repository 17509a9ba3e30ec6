"""Elastic functional synthesis of privacy-preserving trajectory datasets."""

__version__ = "0.1.0"
