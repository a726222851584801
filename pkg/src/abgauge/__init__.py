"""Gauge dependence of Aharonov-Bohm phases for static current sources."""

__version__ = "0.1.0"
