"""Exception hierarchy. Each branch maps onto one CLI exit code."""


class HybridSpkrError(Exception):
    exit_code = 1


class ValidationError(HybridSpkrError, ValueError):
    exit_code = 2


class DataIOError(HybridSpkrError, OSError):
    exit_code = 3


class NumericError(HybridSpkrError, ArithmeticError):
    exit_code = 4


class RateMismatchError(ValidationError):
    pass


class TooShortError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class ZeroEnergyError(NumericError):
    """Frame autocorrelation R(0) is zero, so no predictor exists."""


class UndefinedCorrelationError(NumericError):
    pass


class MissingFileError(DataIOError):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = str(path)


class MalformedWavError(DataIOError):
    pass


class UnsupportedRateError(DataIOError):
    pass


class UnknownLabelError(ValidationError):
    pass
