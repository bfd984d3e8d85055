"""Exception types.

Two families matter to callers: malformed inputs (exit code 1 on the CLI)
and violated mathematical preconditions (exit code 2).
"""


class PacBanditError(Exception):
    """Base class for all package errors."""


class FormatError(PacBanditError, ValueError):
    """A file or record could not be parsed.

    ``where`` carries a human readable location, e.g. ``"line 3, field 'reward'"``.
    """

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class PreconditionError(PacBanditError, ValueError):
    """A mathematical precondition of an operation does not hold."""


class DimensionError(PreconditionError):
    pass


class InfeasibleFloorError(PreconditionError):
    """Requested epsilon floor exceeds 1/K."""


class UnseenContextError(PreconditionError, KeyError):
    """A context-level estimate was requested for a context absent from the history."""

    def __str__(self):
        return Exception.__str__(self)


class InadmissibleKLError(PreconditionError):
    """KL exceeds the admissible threshold of the optimized Bernstein bound."""

    def __init__(self, kl, threshold):
        self.kl = kl
        self.threshold = threshold
        super().__init__(
            f"KL={kl!r} exceeds the admissible threshold {threshold!r} "
            "of the optimized Bernstein bound"
        )


class BoundInapplicableError(PreconditionError):
    """No KL value is admissible at these (t, eps, beta)."""
