"""Closed-loop plan, execute and refine engine for text-grounded tasks."""

__version__ = "0.1.0"
