"""Goodness-of-fit tests built on marked empirical processes."""

__version__ = "0.1.0"
