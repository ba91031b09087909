"""Bilevel design of imbalance-aware cross-entropy losses."""

__version__ = "0.1.0"
