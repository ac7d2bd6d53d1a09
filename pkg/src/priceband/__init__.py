"""Scenario-generation prediction intervals for half-hourly electricity prices."""

__version__ = "0.1.0"
