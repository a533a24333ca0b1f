"""Convergence of integral functionals of one-dimensional diffusions."""

__version__ = "0.1.0"

__all__ = [
    "config",
    "models",
    "coeffspec",
    "quad",
    "scale",
    "classify",
    "simkit",
    "reporting",
    "samples",
    "db",
    "cli",
]
