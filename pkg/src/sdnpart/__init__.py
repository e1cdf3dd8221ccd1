"""Partitioned link-state routing domains under central SDN control."""

__version__ = "0.1.0"
