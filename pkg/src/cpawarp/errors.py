"""Exception taxonomy shared across the library and the CLI."""


class OutOfDomainError(ValueError):
    """A query point lies outside the warping domain."""


class NumericError(ArithmeticError):
    """A numerical operation failed beyond recoverable jitter/retry."""


class InternalError(RuntimeError):
    """An internal invariant was violated (indicates a bug, not bad input)."""
