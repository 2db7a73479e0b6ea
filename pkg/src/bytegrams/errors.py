"""Exception types shared across the toolkit."""


class BytegramsError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BytegramsError):
    """Invalid parameter or run configuration."""


class IngestionError(BytegramsError):
    """Corpus directory or sample file could not be ingested."""


class FormatError(BytegramsError):
    """A structured file (dictionary, manifest, matrix, model) failed to parse."""


class ContractError(BytegramsError):
    """An internal precondition was violated (mismatched n, feature dim, ...)."""


class TrainingError(BytegramsError):
    """Model training failed (non-finite loss, impossible configuration)."""


class MetricUndefinedError(BytegramsError):
    """A requested metric is undefined for the given outcomes (e.g. empty class)."""


class RenderError(BytegramsError):
    """A figure could not be drawn from the given table."""
