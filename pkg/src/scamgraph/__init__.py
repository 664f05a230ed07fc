"""Scam detection for Ethereum contracts from transaction-graph topology."""

__version__ = "0.1.0"
