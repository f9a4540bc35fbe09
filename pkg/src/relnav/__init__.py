"""Cascade observer for UAV-to-moving-platform relative navigation."""

__version__ = "0.1.0"
