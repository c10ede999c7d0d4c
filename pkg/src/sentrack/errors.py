"""Exception types shared across the package."""


class SentrackError(Exception):
    pass


class ShapeError(SentrackError, ValueError):
    """Label distributions or tensors do not match the vertex set."""


class ParameterError(SentrackError, ValueError):
    pass


class CapExceededError(SentrackError):
    """An exhaustive method was asked to enumerate more than its cap allows."""

    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class NumericError(SentrackError, ArithmeticError):
    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class BuildError(SentrackError, ValueError):
    """A scenario cannot be turned into an objective."""


class ScenarioError(SentrackError, ValueError):
    """Scenario text failed validation; the message carries the location."""


class UndefinedError(SentrackError, ArithmeticError):
    pass
