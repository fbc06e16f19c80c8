"""Exception hierarchy shared across the package."""


class FrdwError(Exception):
    """Base class for all package errors."""


class BundleError(FrdwError):
    """Invalid, corrupt or inconsistent on-disk trial bundle."""


class ConfigError(FrdwError):
    """Invalid configuration or incompatible option combination."""


class PipelineError(FrdwError):
    """Training or inference failure inside a decoding pipeline."""


class StreamError(FrdwError):
    """Protocol violation while consuming a chunked trial stream."""
