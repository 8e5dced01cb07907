"""Exception hierarchy shared by all modules."""


class LinkLabError(Exception):
    """Base class for every error raised by rsma_linklab."""


class PreconditionError(LinkLabError, ValueError):
    """An input violates a documented precondition."""


class DomainError(LinkLabError, ValueError):
    """A parameter lies outside its valid domain."""


class DegenerateInputError(LinkLabError, ValueError):
    """An input is degenerate (all-zero matrix, zero channel, ...)."""


class SingularChannelError(LinkLabError, ValueError):
    """The normalized channel matrix is rank deficient or badly conditioned."""


class ContractViolation(LinkLabError, ValueError):
    """Inputs break an assumption a formula depends on (e.g. ZF orthogonality)."""


class AccuracyError(LinkLabError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    The best available estimate is attached as ``estimate``.
    """

    def __init__(self, message: str, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ConfigError(LinkLabError, ValueError):
    """A simulation configuration is invalid."""
