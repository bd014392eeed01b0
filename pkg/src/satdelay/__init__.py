"""Consensus of saturated double-integrator agents under input and communication delays."""

__version__ = "0.1.0"
