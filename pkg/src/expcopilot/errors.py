"""Exception hierarchy shared across the package."""


class ExpCopilotError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ExpCopilotError):
    """A domain object or argument violates its invariants."""


class ConfigError(ExpCopilotError):
    """Configuration file or command-line settings are unusable."""


class GatewayError(ExpCopilotError):
    """A completion or embedding backend failed."""


class ParseError(ExpCopilotError):
    """A model response could not be parsed into valid configurations."""

    def __init__(self, message: str, clauses: list[str] | None = None):
        super().__init__(message)
        self.clauses = clauses or []


class BenchmarkError(ExpCopilotError):
    """A benchmark bundle is malformed or a lookup failed."""


class ElicitationError(ExpCopilotError):
    """Knowledge elicitation produced no usable candidate."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []
