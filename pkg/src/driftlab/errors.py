"""Exception types shared across the toolkit."""


class DriftlabError(Exception):
    """Base class for all toolkit errors."""


class QuantFormatError(DriftlabError):
    """A quantification or metadata file violates the expected layout."""


class QuantParseError(DriftlabError):
    """A data line could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DuplicateTranscriptError(DriftlabError):
    """The same transcript id appears twice within one quantification table."""


class AlignmentError(DriftlabError):
    """Contexts share no transcripts, or two aligned vectors disagree in length."""


class DomainError(DriftlabError):
    """An argument lies outside an operation's domain."""


class VocabularyError(DriftlabError):
    """A context id is missing from the one-hot vocabulary."""


class ParameterError(DriftlabError):
    """A hyperparameter or construction parameter is out of range."""


class SchemaError(DriftlabError):
    """Feature columns do not match what a fitted model expects."""


class SolverError(DriftlabError):
    """The linear system backing a closed-form fit is singular."""


class UndefinedMetricError(DriftlabError):
    """The requested metric is undefined for the given inputs."""


class PairingError(DriftlabError):
    """Two records that must describe the same feature or context pair do not."""


class SettingError(DriftlabError):
    """An evaluation setting cannot be constructed or run."""


class ConfigError(DriftlabError):
    """Invalid run, CLI, or generator configuration."""


class CheckFailure(DriftlabError):
    """A synthetic verification contract did not hold."""
