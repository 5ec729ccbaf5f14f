"""Physics-constrained neural travel-time fields for 2D motion planning."""

__version__ = "0.1.0"
