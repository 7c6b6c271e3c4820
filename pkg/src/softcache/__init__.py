"""Recommendation-aware edge caching with soft cache hits."""

__version__ = '0.1.0'
