"""Transformer tokenization architectures for automatic modulation recognition."""

__version__ = "0.1.0"
