"""Exception hierarchy shared by the simulator, the trainers and the CLI."""

from __future__ import annotations


class JamshieldError(Exception):
    """Base class for every error raised by jamshield."""


class ConfigError(JamshieldError, ValueError):
    """Invalid, unknown or unparsable configuration. Maps to exit code 2."""


class DomainError(JamshieldError, ValueError):
    """A mathematical precondition was violated."""


class ContractError(DomainError):
    """A reward metric fell outside [0, 1]."""


class ActionError(DomainError):
    """A raw policy action was not finite; the episode cannot continue."""


class InapplicableError(DomainError):
    """An operation was asked to compare objects with different supports."""


class DivergenceError(JamshieldError, RuntimeError):
    """Training produced a non-finite loss. Maps to exit code 3."""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}
