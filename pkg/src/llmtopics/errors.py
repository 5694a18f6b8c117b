"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class LlmTopicsError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LlmTopicsError):
    """Invalid configuration value, unknown config key, or bad input data."""

    exit_code = 2


class CorpusFormatError(ConfigError):
    """An input record could not be parsed (message names the line number)."""


class EmptyCorpusError(ConfigError):
    """Ingestion produced a corpus with no documents."""


class DependencyError(LlmTopicsError):
    """A required upstream stage artifact is missing."""

    exit_code = 3


class BackendError(LlmTopicsError):
    """The LLM backend failed after exhausting retries."""

    exit_code = 4


class ScriptMissError(BackendError):
    """A scripted/replay backend had no entry for a request. Never silently ignored."""


class ParseError(LlmTopicsError):
    """A single LLM answer could not be parsed into the expected shape."""

    exit_code = 5


class ParseExhaustedError(ParseError):
    """Parsing failed after all configured retries and no fallback applies."""
