"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`DevrateError`,
and each family maps to one CLI exit code.
"""


class DevrateError(Exception):
    exit_code = 1


class ConfigError(DevrateError):
    exit_code = 2


class ModelError(DevrateError):
    exit_code = 3


class DerivativeUnavailableError(ModelError):
    pass


class InvalidNonequilibriumForceError(ModelError):
    pass


class InvalidLyapunovError(ModelError):
    pass


class ParameterError(ModelError, ValueError):
    pass


class OutOfTheoryError(ParameterError):
    pass


class InsufficientWindowError(ParameterError):
    pass


class ExpressionError(ModelError, ValueError):
    pass


class GridError(DevrateError):
    exit_code = 4


class MeshError(GridError, ValueError):
    pass


class UnsupportedDiffusionError(GridError):
    pass


class MeasureError(GridError, ValueError):
    pass


class SolverError(DevrateError):
    exit_code = 5


class ConvergenceError(SolverError):
    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class PositivityViolationError(SolverError):
    pass


class IncompatibleRhsError(SolverError):
    pass


class ConvexityError(SolverError):
    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class DegeneracyError(SolverError):
    pass


class NumericRangeError(SolverError):
    pass


class BlowUpError(SolverError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class EmptyFamilyError(ParameterError):
    pass


class DomainError(ParameterError):
    pass
