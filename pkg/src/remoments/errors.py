"""Exception hierarchy shared by all modules."""


class MomentError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(MomentError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class QuadratureFailure(MomentError):
    pass


class Unclassifiable(MomentError, ValueError):
    pass


class IncompleteMomentSet(MomentError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class HistoryTooShort(MomentError):
    pass


class GridMismatch(MomentError, ValueError):
    pass


class NoConvergence(MomentError):
    def __init__(self, step, max_cycles):
        self.step = step
        self.max_cycles = max_cycles
        super().__init__(
            f"coarse step {step}: cycle test not met within {max_cycles} cycles")


class InstabilityDetected(MomentError):
    pass


class NotLocalizable(MomentError, ValueError):
    pass


class IntervalMismatch(MomentError, ValueError):
    pass


class IntegratorFailure(MomentError):
    def __init__(self, message, sample=None):
        self.sample = sample
        if sample is not None:
            message = f"sample {sample}: {message}"
        super().__init__(message)


class DegenerateDenominator(MomentError):
    pass


class EmptyBins(MomentError, ValueError):
    pass


class ConfigError(MomentError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
