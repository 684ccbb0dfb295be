"""Exceptions shared by every kgalign phase."""

from textwrap import dedent
from typing import Optional


class AlignmentError(Exception):
    message: str

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return self.message

    def advice(self) -> str:
        return ""


class DatasetError(AlignmentError):
    """A dataset, seed or word-vector file could not be parsed or violates a graph invariant."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None) -> None:
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(location + message)


class TrainingError(AlignmentError):
    pass


class BackendError(AlignmentError):
    def advice(self) -> str:
        return dedent(
            """
        The language-model backend could not be reached. Check the following settings:

            - KGALIGN_ENDPOINT: base URL of the chat-completions service
            - KGALIGN_API_KEY:  credential for the service (or the variable named by llm.api_key_env)
        """
        )


class ResponseParseError(AlignmentError):
    pass


class ConfigError(AlignmentError):
    def advice(self) -> str:
        return "Run `kg-align info` for the configuration keys and their defaults."


class PhaseError(AlignmentError):
    """Wraps a failure raised inside one pipeline phase."""

    def __init__(self, phase: str, cause: BaseException) -> None:
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {cause}")

    def advice(self) -> str:
        return self.cause.advice() if isinstance(self.cause, AlignmentError) else ""
