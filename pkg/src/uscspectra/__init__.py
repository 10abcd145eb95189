"""Spectral analysis of ultrastrongly coupled light-matter models."""
from .errors import (
    ConfigError,
    InstabilityError,
    NonConvergenceError,
    PhysicalParameterError,
    SizingError,
    USCError,
)

__version__ = "0.1.0"
