"""Exception hierarchy shared by all ndgkit modules."""


class NDGError(Exception):
    """Base class for every error raised by ndgkit."""


class InvalidOrderError(NDGError, ValueError):
    pass


class NonPositiveDensityError(NDGError, ValueError):
    """Raised when an Euler flux is evaluated on a state with rho <= 0.

    ``cell`` holds the global cell index tuple when it is known.
    """

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ShapeMismatchError(NDGError, ValueError):
    pass


class InstabilityError(NDGError, FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DecompositionError(NDGError, ValueError):
    pass


class ExchangeError(NDGError, RuntimeError):
    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class RunError(NDGError, RuntimeError):
    def __init__(self, message, worker=None):
        super().__init__(message)
        self.worker = worker


class ConfigError(NDGError, ValueError):
    pass
