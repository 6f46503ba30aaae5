"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class VGTeamError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(VGTeamError, ValueError):
    pass


class EmptyPrompt(VGTeamError, ValueError):
    pass


class EmptyInput(VGTeamError, ValueError):
    pass


class SchemaViolation(VGTeamError):
    """An agent reply did not follow its role's output schema.

    ``scene`` names the offending scene/image index when one is known.
    """

    def __init__(self, message: str, scene: int | None = None):
        super().__init__(message)
        self.scene = scene


class RoleSpecError(VGTeamError):
    pass


class MissingArtifact(VGTeamError):
    pass


class LoopCapExceeded(VGTeamError):
    def __init__(self, message: str, role: str | None = None, rounds: int = 0):
        super().__init__(message)
        self.role = role
        self.rounds = rounds


class CharacterConfusion(VGTeamError):
    def __init__(self, message: str, role: str | None = None):
        super().__init__(message)
        self.role = role


class BackendError(VGTeamError):
    retryable = False


class TransportError(BackendError):
    retryable = True


class AuthError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class ModerationRejection(BackendError):
    pass


class UnknownModel(VGTeamError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class NetworkInstability(VGTeamError):
    """Retries were exhausted on a transport failure."""

    def __init__(self, last_error: BaseException, attempts: int):
        super().__init__(f"gave up after {attempts} attempt(s): {last_error}")
        self.last_error = last_error
        self.attempts = attempts


class AssemblyError(VGTeamError):
    pass


class MissingAsset(AssemblyError):
    pass


class TemplateError(AssemblyError):
    pass


class IoFailure(VGTeamError, OSError):
    pass
