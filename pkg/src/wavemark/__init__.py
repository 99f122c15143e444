"""Wavelet features, GA marker selection and survival statistics for clinical marker tables."""

__version__ = "0.1.0"
