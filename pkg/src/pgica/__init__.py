"""Bayesian ICA with Pólya-Gamma augmented Gibbs sampling, EM and diagnostics."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
