"""Maximum-entropy densities on R^d under generalized moment inequality constraints."""
__version__ = "0.1.0"
