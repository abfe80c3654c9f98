"""Exception hierarchy shared by all modules."""


class WatermarkError(Exception):
    """Base class for every error raised by this package."""


class NotPositiveSemidefinite(WatermarkError, ValueError):
    pass


class NotConverged(WatermarkError, ArithmeticError):
    pass


class NoConvergence(WatermarkError, ArithmeticError):
    pass


class NotStabilizable(WatermarkError, ValueError):
    pass


class NotDetectable(WatermarkError, ValueError):
    pass


class UnstableClosedLoop(WatermarkError, ValueError):
    pass


class NoWatermarkPath(WatermarkError, ValueError):
    """No k >= 0 with C (A+BK)^k B != 0: the watermark never reaches the output."""


class SingularExcitation(WatermarkError, ValueError):
    pass


class NumericalBlowup(WatermarkError, ArithmeticError):
    pass


class DimensionMismatch(WatermarkError, ValueError):
    pass


class WindowTooShort(WatermarkError, ValueError):
    pass


class OutOfRange(WatermarkError, IndexError):
    pass


class SingularWindow(WatermarkError, ArithmeticError):
    pass


class NotSpecialCase(WatermarkError, ValueError):
    pass


class ConfigError(WatermarkError, ValueError):
    pass
