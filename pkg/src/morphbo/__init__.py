"""Design-by-Morphing shape optimization with hedged batch Bayesian optimization."""

__version__ = "0.1.0"
