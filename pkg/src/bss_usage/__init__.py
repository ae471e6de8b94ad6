"""Weekday/weekend usage analysis for bike-sharing systems."""

__version__ = "0.1.0"
