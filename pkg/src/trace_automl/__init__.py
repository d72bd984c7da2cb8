"""Recommend trace clustering pipelines for event logs by meta-learning."""

__version__ = "0.1.0"
