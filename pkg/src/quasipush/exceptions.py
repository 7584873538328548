"""Exception types raised by quasipush."""


class QuasiPushError(Exception):
    """Base class for all package errors."""


class ConfigError(QuasiPushError, ValueError):
    """Invalid scenario, file or parameter configuration."""


class OverlapError(QuasiPushError):
    """Penetration between pusher and object exceeded the allowed depth."""

    def __init__(self, message, depth=None, step=None):
        super().__init__(message)
        self.depth = depth
        self.step = step


class ZeroWrench(QuasiPushError, ValueError):
    pass


class ZeroTwist(QuasiPushError, ValueError):
    pass


class NoConvergence(QuasiPushError, RuntimeError):
    pass


class DegenerateData(QuasiPushError, ValueError):
    pass


class NotPSD(QuasiPushError, ValueError):
    pass


class SingularD(QuasiPushError, ArithmeticError):
    pass


class CycleDetected(QuasiPushError, RuntimeError):
    """Lemke pivot cap reached without termination."""
