"""Synthetic serious-game datasets from a Bayesian network and a logistic response model."""

__version__ = "1.0.0"
