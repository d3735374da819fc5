"""Learned vector representations of standard cells from Liberty libraries."""

__version__ = "0.1.0"
