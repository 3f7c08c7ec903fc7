"""Federated-learning poisoning lab: uncertainty-maximising attacks on small MLPs."""

__version__ = "0.1.0"
