"""Lasing-off electron power prediction and photon pulse reconstruction."""

__version__ = "0.1.0"
