"""Exception types raised across the toolkit."""


class SpoofCMError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(SpoofCMError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class DomainError(SpoofCMError, ValueError):
    """An operation was evaluated outside its mathematical domain."""


class ContractError(SpoofCMError, ValueError):
    """A caller violated a documented precondition."""


class ConfigError(SpoofCMError, ValueError):
    """A configuration value is invalid. ``field`` names the offending path."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ParameterError(ConfigError):
    """Parameters are individually valid but jointly degenerate."""


class FormatError(SpoofCMError, ValueError):
    """A file on disk does not follow the expected format."""


class ParseError(FormatError):
    def __init__(self, message, line_no=None, path=None):
        self.line_no = line_no
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{line_no}: " if line_no is not None else ""
        super().__init__(where + message)


class MetricError(SpoofCMError, ValueError):
    """Metric inputs are insufficient (e.g. a class is missing)."""


class FusionError(SpoofCMError, ValueError):
    def __init__(self, message, missing=()):
        self.missing = sorted(missing)
        if self.missing:
            message += ": " + " ".join(self.missing)
        super().__init__(message)


class DatasetError(SpoofCMError, ValueError):
    pass


class TrainingError(SpoofCMError, RuntimeError):
    pass
