"""Exception hierarchy shared by every qta module."""


class QtaError(Exception):
    """Base class for all errors raised by qta."""


class CapacityError(QtaError):
    """Register layout exceeds the dense-vector qubit cap."""


class ShapeError(QtaError):
    """Matrix or vector dimensions do not match the addressed qubits."""


class ValidationError(QtaError):
    """An operator or state violates a required invariant (unitarity, normalization)."""


class NumericalDegeneracyError(QtaError):
    """A measurement was requested on a state with vanishing marginal probability."""


class ConfigurationError(QtaError):
    """Inconsistent grid, register or run configuration."""


class DomainError(QtaError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConstructionError(QtaError):
    """A built operator failed its contract checks."""
