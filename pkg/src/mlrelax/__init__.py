"""Machine-learned relaxation control for a sequential two-phase flow solver."""

__version__ = "0.1.0"
