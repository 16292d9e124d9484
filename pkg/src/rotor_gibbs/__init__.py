"""Planar rotors under circle diffusions: kernels, conditioned Gibbs models,
samplers, low-energy percolation and polymer expansions."""

from .errors import DomainError, RegimeError, RotorGibbsError, UsageError

__version__ = "0.1.0"

__all__ = ["DomainError", "RegimeError", "RotorGibbsError", "UsageError", "__version__"]
