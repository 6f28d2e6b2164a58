"""Simulation lab for double-recurrence counterexample mechanisms."""

__version__ = "0.1.0"
