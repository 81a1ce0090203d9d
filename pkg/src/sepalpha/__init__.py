"""Boundary-driven exclusion process SEP(alpha): exact oracles, moment solvers,
kinetic Monte Carlo, continuum semigroups and fluctuation statistics."""

from .errors import DomainError, PreconditionError, SepError, SizeError, SolverError
from .model import Configuration, DualConfiguration, ModelParams

__all__ = [
    "Configuration",
    "DomainError",
    "DualConfiguration",
    "ModelParams",
    "PreconditionError",
    "SepError",
    "SizeError",
    "SolverError",
]
__version__ = "0.1.0"
