"""Exception types shared across the package."""


class SplitkitError(Exception):
    """Base class for all library errors."""


class DegeneratePlaneError(SplitkitError):
    """Spanning pair is (numerically) linearly dependent."""


class TransversalityError(SplitkitError):
    """A line and a plane are too close to tangent for a stable projection."""

    def __init__(self, message, angle=None):
        super().__init__(message)
        self.angle = angle


class ChartUnsuitableError(SplitkitError):
    """The plane is too close to containing the third coordinate axis.

    Raised when the graph coefficients (a, b) would blow up; permuting the
    chart coordinates is the standard remedy.
    """


class ChartExitError(SplitkitError):
    """A flow trajectory or patch left the local chart box."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class ConvergenceError(SplitkitError):
    """An iterative computation did not reach its tolerance."""


class ConfigError(SplitkitError):
    """Invalid experiment configuration or map specification."""
