"""Pulse-level simulator for shaped microwave single-photon emission."""

__version__ = "0.1.0"
