"""Population empirical Bayes predictive inference and bumping variational inference."""
__version__ = "0.1.0"
