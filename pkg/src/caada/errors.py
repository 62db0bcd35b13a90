"""Exception hierarchy shared across the package."""


class CaadaError(Exception):
    """Base class for all package errors."""


class DimensionError(CaadaError, ValueError):
    pass


class DegenerateBatchError(CaadaError, ValueError):
    """A batch or bucket is too small for an N-1 covariance divisor."""


class NonFiniteError(CaadaError, FloatingPointError):
    pass


class LabelError(CaadaError, ValueError):
    pass


class ConfigError(CaadaError, ValueError):
    pass


class StateError(CaadaError, RuntimeError):
    """An operation was called out of order, e.g. backward before forward."""


class DataError(CaadaError, ValueError):
    """Malformed or unusable input data (CSV parse failures, empty sets)."""


class DivergenceError(CaadaError, RuntimeError):
    """Training produced non-finite losses for too many consecutive steps.

    ``history`` holds the metrics recorded before the abort.
    """

    def __init__(self, message, step=None, history=None):
        super().__init__(message)
        self.step = step
        self.history = list(history or [])


class EvaluationError(CaadaError, ValueError):
    pass
