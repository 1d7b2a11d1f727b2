"""Verifiable blind quantum computing test rounds recycled for gate-noise estimation."""

__version__ = "0.1.0"
