"""Convex function chasing with black-box advice: algorithms, oracles and a verification harness."""

__version__ = "0.1.0"
