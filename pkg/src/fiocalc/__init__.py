"""Symbolic calculus for Fourier integral operators with numerical oracles."""

from .errors import (
    ChartError,
    DomainError,
    FIOError,
    QuadratureBudgetError,
    RefinementError,
    TransversalityError,
)
from .inertia import Inertia, det_plus, det_plus_arg, det_plus_arg_continued

__all__ = [
    "ChartError",
    "DomainError",
    "FIOError",
    "Inertia",
    "QuadratureBudgetError",
    "RefinementError",
    "TransversalityError",
    "det_plus",
    "det_plus_arg",
    "det_plus_arg_continued",
]

__version__ = "0.1.0"
