"""Exception hierarchy. CLI exit codes: ConfigError -> 1, DataError -> 2, NumericalError -> 3."""


class SpoofcmError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SpoofcmError):
    """Invalid parameters, configuration, or usage."""


class DataError(SpoofcmError):
    """Bad or missing input data (audio, manifests, score files)."""


class NumericalError(SpoofcmError):
    """Numerical failure: non-finite loss, rank deficiency, degenerate frames."""
