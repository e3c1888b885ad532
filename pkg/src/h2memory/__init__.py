"""Hierarchical, heterogeneous long-term memory for personalized assistants, with its evaluation harness."""

__version__ = "0.1.0"
