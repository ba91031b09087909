"""Exception types shared across the package."""


class LossforgeError(Exception):
    """Base class for all package errors."""


class NumericalError(LossforgeError, FloatingPointError):
    """A computation produced a NaN or infinite value.

    ``index`` identifies where it happened: the op index on a tape, or the
    iteration index of an iterative routine.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ShapeError(LossforgeError, ValueError):
    pass


class UnknownLeaf(LossforgeError, KeyError):
    pass


class ConfigError(LossforgeError, ValueError):
    pass


class EvalError(LossforgeError, ValueError):
    pass


class InfeasibleError(LossforgeError):
    pass


class DivergenceError(LossforgeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class VerificationFailure(LossforgeError):
    pass
