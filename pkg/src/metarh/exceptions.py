"""Exception hierarchy.

Data-shaped failures (bad files, leakage, inconsistent vocabularies) are kept
distinct from runtime failures so the CLI can map them to exit codes.
"""


class MetaRHError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MetaRHError):
    """Input data is malformed, inconsistent, or leaks few-shot relations."""


class ParseError(DataError):
    """A fact line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(DataError):
    """A parsed record violates the fact schema."""


class ConsistencyError(DataError):
    """A fact references a symbol outside the vocabulary."""


class LeakageError(DataError):
    """A background fact mentions a few-shot relation."""


class BuildError(DataError):
    """Dataset construction cannot proceed (empty selection, bad split)."""


class InputError(DataError):
    """CLI input files disagree with each other (e.g. relation mismatch)."""


class EpisodeError(MetaRHError):
    """An episode cannot be sampled from the given task."""


class CorruptionError(EpisodeError):
    """No valid negative tail exists for a fact."""


class ConfigError(MetaRHError):
    """A configuration value is invalid."""


class CheckpointError(MetaRHError):
    """A checkpoint file is corrupt or belongs to different data."""


class EvaluationError(MetaRHError):
    """The evaluation protocol cannot be applied (e.g. missing true tail)."""


class NumericError(MetaRHError):
    """A non-finite value appeared where a finite one is required."""
