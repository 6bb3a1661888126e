"""Component mode synthesis and Bayesian damage identification for substructured models."""

__version__ = "0.1.0"
