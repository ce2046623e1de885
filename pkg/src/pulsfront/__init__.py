"""Pulsating fronts in space-time periodic reaction-advection-diffusion media.

Subpackages compute principal periodic eigenvalues of twisted linear
operators, minimal front speeds from the dispersion relation, periodic
equilibria, explicit sub/supersolution pairs, regularized traveling profiles
on finite cylinders, and direct spreading-speed measurements, with a CLI
driver and a reproducible acceptance audit.
"""

__version__ = "0.1.0"

from .errors import (
    AuditFailure,
    ConfigurationError,
    ContainmentError,
    EllipticityError,
    EvaluationError,
    IterationError,
    NumericalError,
    PositivityError,
    PreconditionError,
    PulsfrontError,
)

__all__ = [
    "AuditFailure",
    "ConfigurationError",
    "ContainmentError",
    "EllipticityError",
    "EvaluationError",
    "IterationError",
    "NumericalError",
    "PositivityError",
    "PreconditionError",
    "PulsfrontError",
    "__version__",
]
