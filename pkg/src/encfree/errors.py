"""Exception types shared across the package."""


class EncFreeError(Exception):
    """Base class for all package errors."""


class ShapeError(EncFreeError, ValueError):
    pass


class ParameterError(EncFreeError, ValueError):
    pass


class ContractError(EncFreeError, RuntimeError):
    """A caller broke an operation's precondition (stale cache, unfrozen decoder, ...)."""


class RankError(EncFreeError, ValueError):
    pass


class DivergenceError(EncFreeError, FloatingPointError):
    """Raised when a loss becomes non-finite during optimization."""

    def __init__(self, message, epoch=None, batch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.step = step


class FormatError(EncFreeError, ValueError):
    pass


class LengthError(FormatError):
    pass


class VersionError(FormatError):
    pass


class ConsistencyError(EncFreeError, ValueError):
    pass


class SizeError(EncFreeError, ValueError):
    pass


class ConfigError(EncFreeError, ValueError):
    pass
