"""Process-guided deep material network database for short fiber composites."""

__version__ = "0.1.0"
