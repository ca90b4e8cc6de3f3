"""Exception types raised across the package."""


class HanmError(Exception):
    """Base class for all package errors."""


class DimensionError(HanmError, ValueError):
    pass


class NumericError(HanmError, FloatingPointError):
    pass


class StateError(HanmError, RuntimeError):
    pass


class ConfigError(HanmError, ValueError):
    pass


class ParseError(HanmError, ValueError):
    pass


class TrainingError(HanmError, RuntimeError):
    """Loss went non-finite during optimisation."""

    def __init__(self, message, epoch=None, term=None):
        super().__init__(message)
        self.epoch = epoch
        self.term = term


class SelectionError(HanmError, RuntimeError):
    pass


class PairSkipped(HanmError):
    """A benchmark pair that cannot be used (e.g. multi-dimensional cause)."""

    def __init__(self, pair_id, reason):
        super().__init__(f"pair {pair_id} skipped: {reason}")
        self.pair_id = pair_id
        self.reason = reason
