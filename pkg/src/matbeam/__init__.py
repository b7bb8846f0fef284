"""Material-aware initial beam establishment simulator."""

__version__ = "0.1.0"
