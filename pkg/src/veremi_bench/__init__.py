"""Misbehavior-detection benchmark toolkit for VeReMi-style vehicular traces."""

__version__ = "0.1.0"
