"""Lagged linear regression over irregular clinical event streams."""

__version__ = "0.1.0"
