"""Exception hierarchy. Every error raised by the package derives from SteinEvoError."""


class SteinEvoError(Exception):
    pass


class DimError(SteinEvoError, ValueError):
    pass


class InvalidMatrix(SteinEvoError, ValueError):
    pass


class DegenerateSamples(SteinEvoError, ValueError):
    pass


class InvalidBase(SteinEvoError, ValueError):
    pass


class DatasetError(SteinEvoError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ScheduleError(SteinEvoError, ValueError):
    pass


class GradientUnavailable(SteinEvoError):
    pass


class DegenerateWeights(SteinEvoError, FloatingPointError):
    pass


class ConfigError(SteinEvoError, ValueError):
    pass


class SingleSample(SteinEvoError, ValueError):
    pass


class RunFailed(SteinEvoError, RuntimeError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []
