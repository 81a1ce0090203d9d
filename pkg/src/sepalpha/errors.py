"""Exception hierarchy shared by all modules."""


class SepError(Exception):
    """Base class for library errors."""


class DomainError(SepError, ValueError):
    """An argument lies outside the domain of an operation."""


class SizeError(SepError):
    """A state space or problem exceeds the configured size cap."""


class SolverError(SepError, RuntimeError):
    """A numerical solve failed or produced an unacceptable residual."""


class PreconditionError(SepError):
    """The hypothesis of a checker does not hold for the supplied data."""
