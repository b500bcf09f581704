"""homecore: perception, learning and planning components for a domestic service robot."""

__version__ = "0.1.0"
