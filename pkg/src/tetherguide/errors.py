"""Exception types raised by the simulator and its analysis tools."""


class TetherError(Exception):
    """Base class for all domain errors in this package."""


class LiftOff(TetherError):
    """Vertical force on the human reached its weight; the ground model no longer holds."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NonFinite(TetherError):
    """A state component left the finite range during integration."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ZeroForceRef(TetherError, ValueError):
    pass


class InfeasibleForce(TetherError, ValueError):
    pass


class NoConvergence(TetherError):
    pass


class OutOfRange(TetherError, ValueError):
    pass


class DegenerateTangent(TetherError, ValueError):
    pass


class EmptyTrajectory(TetherError, ValueError):
    pass


class InsufficientRuns(TetherError, ValueError):
    pass


class MissingLogs(TetherError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing log channel"


class ConfigError(TetherError, ValueError):
    pass
