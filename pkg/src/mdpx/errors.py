"""Exception types shared across modules (mapped to CLI exit codes)."""


class InfiniteValueError(ValueError):
    """The requested optimum is infinite (or undefined)."""

    reason = "infinite"

    def __init__(self, message: str, witness=None, reason: str | None = None):
        super().__init__(message)
        self.witness = witness
        if reason:
            self.reason = reason


class ResourceLimitError(RuntimeError):
    """A configured size guard was exceeded; no answer is produced."""
