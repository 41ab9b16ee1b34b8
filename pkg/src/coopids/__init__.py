"""Cooperating-agent distributed intrusion detection, as a deterministic simulation."""

__version__ = "0.1.0"
