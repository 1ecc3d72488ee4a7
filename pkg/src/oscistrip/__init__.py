"""Reaction-diffusion problems with terms concentrated in an oscillating boundary strip.

Finite-element laboratory for the strip problems and their boundary limit:
concentrating integrals, operators, semiflows, equilibria, unstable
manifolds and attractor semicontinuity.
"""
from .errors import (BranchEscapeError, ConfigError, CountMismatchError, DivergenceError,
                     DomainError, MeshError, NonHyperbolicError, NumericalError,
                     OscistripError)
from .geometry import Circle, Ellipse, StripRegion, make_curve, make_profile, mu

__version__ = "0.1.0"

__all__ = [
    "BranchEscapeError", "Circle", "ConfigError", "CountMismatchError", "DivergenceError",
    "DomainError", "Ellipse", "MeshError", "NonHyperbolicError", "NumericalError",
    "OscistripError", "StripRegion", "make_curve", "make_profile", "mu",
]
