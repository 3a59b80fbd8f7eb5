"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IdPatternError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(IdPatternError):
    pass


class TaxonomyParseError(IdPatternError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateAliasError(TaxonomyParseError):
    def __init__(self, alias: str, first: str, second: str, line: int | None = None):
        self.alias = alias
        self.labels = (first, second)
        super().__init__(f"alias {alias!r} claimed by both {first} and {second}", line)


class MisuseError(IdPatternError):
    """An operation was called with inputs its contract forbids."""


class PhaseOrderError(MisuseError):
    pass


class MalformedOutputError(IdPatternError):
    """A model reply could not be parsed into the expected structure."""


class DimensionError(IdPatternError):
    pass


class IntegrityError(IdPatternError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"byte offset {offset}: {message}")


class GatewayError(IdPatternError):
    pass


class NetworkError(GatewayError):
    """Transport-level failure; retried with backoff before surfacing."""


class ProtocolError(GatewayError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:200]}")


class FixtureError(GatewayError):
    """A mock transcript has no reply for the requested key."""


class PhaseFailure(IdPatternError):
    def __init__(self, phase: str, agent_id: str, cause: BaseException):
        self.phase = phase
        self.agent_id = agent_id
        self.cause = cause
        super().__init__(f"{phase} phase failed for agent {agent_id!r}: {cause}")


class RunFailure(IdPatternError):
    """A case run aborted; ``log`` holds the persisted incomplete prefix."""

    def __init__(self, case_id: str, cause: BaseException, log=None):
        self.case_id = case_id
        self.cause = cause
        self.log = log
        super().__init__(f"case {case_id!r} failed: {cause}")
