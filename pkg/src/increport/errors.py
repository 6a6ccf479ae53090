"""Exception hierarchy shared across the package."""


class IncreportError(Exception):
    """Base class for all package errors."""


class InvalidInputError(IncreportError, ValueError):
    """An argument violated a documented precondition."""


class ConfigError(IncreportError):
    """A run configuration file is missing, malformed, or inconsistent."""


class DecodeError(IncreportError, IOError):
    """The external video decoder failed; carries its diagnostics."""


class TransportError(IncreportError):
    """A model endpoint could not be reached after exhausting retries."""


class ProviderError(IncreportError):
    """The model endpoint answered with a non-2xx status."""

    def __init__(self, status_code: int, message: str):
        super().__init__(f"provider returned {status_code}: {message}")
        self.status_code = status_code
        self.message = message


class ExtractionError(IncreportError):
    """No schema-valid JSON object could be extracted from model output.

    ``raw_text`` keeps the full model output for logging.
    """

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ScriptedFixtureMissing(IncreportError):
    """The scripted backend has no fixture for the requested key."""


class UndefinedScoreError(IncreportError):
    """A final score was requested with one of its component metrics absent."""


class ReportParseError(IncreportError):
    """An incident report document is malformed; names the offending field."""


class StageError(IncreportError):
    """A pipeline stage failed hard for one video."""


class PipelineError(IncreportError):
    """The per-video pipeline could not produce any candidate."""


class SessionError(IncreportError):
    """An A/B scoring session could not be created or used."""
