"""Pose-augmented cross-view matching toolkit."""

__version__ = "0.1.0"
