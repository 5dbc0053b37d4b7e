"""Weighting by a uniform transformer: ATT estimation via kernel U-statistics."""

__version__ = "0.1.0"
