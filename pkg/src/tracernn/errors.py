"""Exception hierarchy shared by the ingestion, model and CLI layers."""


class TraceRNNError(Exception):
    pass


class ConfigError(TraceRNNError):
    """Invalid hyperparameters or inconsistent configuration."""


class DataError(TraceRNNError):
    """A problem with input data. ``line`` is the 1-based file line, if known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class ModelFormatError(TraceRNNError):
    pass


class UnsupportedVersionError(ModelFormatError):
    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(
            f"unsupported model format version {found} (this build reads version {supported})"
        )


class IntegrityError(ModelFormatError):
    pass


class UndefinedMetricError(TraceRNNError):
    """Raised when a metric is undefined for the input, e.g. AUROC over one class."""
