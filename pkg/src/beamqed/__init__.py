"""Photon-correlation simulator for cavity QED with a thermal atomic beam."""

__version__ = "0.1.0"
