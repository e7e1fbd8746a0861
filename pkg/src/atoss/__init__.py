"""Aspect-term oriented sentence splitting for ABSA pipelines."""

__version__ = "0.1.0"
