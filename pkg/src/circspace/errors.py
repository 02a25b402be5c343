"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class EvaluationFailure(ArithmeticError):
    """A sampled function returned a non-finite value."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonConvergence(RuntimeError):
    """An adaptive loop hit its size cap before meeting the tolerance."""

    def __init__(self, message, value=None, error_estimate=None, dimension=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate
        self.dimension = dimension


class SingularOperator(ArithmeticError):
    pass


class NearSingularWarning(RuntimeWarning):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class DataError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SamplingError(RuntimeError):
    pass
