"""Exception types shared across the lab."""


class SRLabError(Exception):
    """Base class for all lab errors."""


class DomainError(SRLabError, ValueError):
    """A point or parameter lies outside the admissible domain."""


class EscapeError(SRLabError):
    """A trajectory left the structure's domain box."""

    def __init__(self, message, exit_time=None, exit_state=None):
        super().__init__(message)
        self.exit_time = exit_time
        self.exit_state = exit_state


class HormanderViolation(SRLabError):
    """Iterated brackets fail to span the tangent space up to the requested depth."""


class DegenerateInputError(SRLabError, ValueError):
    """Input violates a non-degeneracy precondition (zero length, constant control, ...)."""


class InsufficientDataError(SRLabError):
    """Too few usable samples to fit or diagnose."""
