"""Exception hierarchy shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class SingularityError(ValidationError):
    """Transmission value too close to zero to invert safely."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or logit."""


class DataError(IOError):
    """A required file or directory is missing or unreadable."""
