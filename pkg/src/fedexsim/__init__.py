"""Federated-learning victim training, query-budgeted prediction oracle, and
model-extraction attack simulation with accuracy/fidelity/KL evaluation."""

__version__ = "0.1.0"
