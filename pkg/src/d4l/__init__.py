"""Decentralized dictionary learning over time-varying digraphs."""

__version__ = "0.1.0"
