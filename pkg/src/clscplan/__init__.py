"""Closed-loop supply chain tactical planning and rolling-horizon simulation."""

__version__ = "0.1.0"
