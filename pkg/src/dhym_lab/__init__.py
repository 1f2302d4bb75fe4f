"""Numerical lab for the deformed Hermitian-Yang-Mills variational framework."""

__version__ = "0.1.0"
