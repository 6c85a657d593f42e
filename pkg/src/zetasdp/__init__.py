"""Certified bounds on zero statistics via sum-of-squares semidefinite programming."""

__version__ = "0.1.0"
