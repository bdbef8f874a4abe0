"""Exception hierarchy shared by every module."""


class FockmodError(Exception):
    """Base class for toolkit errors."""


class CapacityError(FockmodError):
    """A basis would exceed the configured dimension limit."""


class DomainError(FockmodError, ValueError):
    """An argument lies outside the truncated domain (e.g. a degree above cap)."""


class PreconditionError(FockmodError):
    """A precondition gate failed; ``residual`` holds the offending defect."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CompletenessError(FockmodError):
    """Wold blocks fail to span the space at the current cap."""

    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree
