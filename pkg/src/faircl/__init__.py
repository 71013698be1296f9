"""Continual-learning bias mitigation benchmark with an equal-opportunity fairness score."""

__version__ = "0.1.0"
