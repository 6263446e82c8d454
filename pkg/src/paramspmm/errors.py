"""Exception hierarchy shared by every paramspmm module."""


class ParamSpMMError(Exception):
    """Base class for all errors raised by this package."""


class MatrixMarketError(ParamSpMMError, ValueError):
    """Malformed Matrix Market input. Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(ParamSpMMError, ValueError):
    pass


class DimensionMismatchError(ParamSpMMError, ValueError):
    pass


class UndefinedMetricError(ParamSpMMError, ValueError):
    """A metric or feature was requested on a matrix without nonzeros."""


class FormatError(ParamSpMMError, ValueError):
    """Corrupt or incompatible binary/model/CSV file."""


class SchemaError(FormatError):
    pass


class ModelNotFoundError(ParamSpMMError, LookupError):
    pass


class VerificationError(ParamSpMMError):
    def __init__(self, message, matrix=None, config=None):
        self.matrix = matrix
        self.config = config
        super().__init__(message)
