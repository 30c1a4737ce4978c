"""Chaos-engineering benchmark harness for a miniature 5G control plane."""

__version__ = "0.1.0"
