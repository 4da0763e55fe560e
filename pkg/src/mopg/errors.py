"""Exception hierarchy shared by all modules."""

__all__ = [
    "MopgError",
    "DomainError",
    "ProjectionError",
    "NumericError",
    "DegenerateFusionError",
]


class MopgError(Exception):
    """Base class for library errors."""


class DomainError(MopgError, ValueError):
    """Input outside the domain of an operation (validation failure)."""


class ProjectionError(DomainError):
    """Point lies on the equator of a tangent chart and projects to infinity."""


class NumericError(MopgError, ArithmeticError):
    """Numerical failure such as a singular matrix or non-finite value."""


class DegenerateFusionError(NumericError):
    """Every candidate weight of a mixture fusion vanished."""
