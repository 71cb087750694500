"""Analytic solver and flow-level simulator for interference-coupled RAN slicing."""
__version__ = "0.1.0"
