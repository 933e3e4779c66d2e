"""Interference alignment with discrete constellations: MaxSINR, ML decoding and learned encoders."""

__version__ = "0.1.0"
