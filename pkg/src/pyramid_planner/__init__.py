"""Depth-image pyramid motion planner for multicopters, with a closed-loop simulator."""

__version__ = "0.1.0"
