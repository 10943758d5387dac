"""Hierarchical tracing and failure-onset localization for code-agent runs."""

__version__ = "0.1.0"
