"""Exception types shared across the package."""


class ParmodError(Exception):
    """Base class for all package errors."""


class ConfigError(ParmodError):
    """Malformed configuration document (syntax, unknown or missing keys)."""


class ValidationError(ParmodError):
    """A geometry invariant is violated; the message names the invariant."""


class EmptyBoxError(ValidationError):
    """The interference box is empty on at least one axis."""


class NoSolutionError(ParmodError):
    """The inverse kinematics has no solution at the queried position."""


class AmbiguityError(ParmodError):
    """More than one sign-consistent tilt root exists at the queried position."""


class TopologyError(ParmodError):
    """A slice region has more connected components than the configured limit."""
