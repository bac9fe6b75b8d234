"""Exception hierarchy shared by every module."""


class CausawareError(Exception):
    """Base class for all package errors."""


class ValidationError(CausawareError, ValueError):
    """Input violates a documented precondition."""


class InvalidParameterError(ValidationError):
    pass


class InvalidCovarianceError(ValidationError):
    pass


class InfeasibleMomentsError(ValidationError):
    """Target second moments cannot be produced by any error covariance."""

    def __init__(self, message, phi_cc=None, phi_cy=None, phi_yy=None):
        super().__init__(message)
        self.phi_cc = phi_cc
        self.phi_cy = phi_cy
        self.phi_yy = phi_yy


class InfeasibleConfigurationError(CausawareError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class SingularDesignError(CausawareError):
    pass


class DegenerateLabelsError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class CellExhaustedError(CausawareError):
    def __init__(self, cell, requested, available):
        super().__init__(
            f"cell (C={cell[0]}, Y={cell[1]}) exhausted: "
            f"needed {requested} rows, {available} available"
        )
        self.cell = cell
        self.requested = requested
        self.available = available


class UnmatchableError(CausawareError):
    pass


class UnreachableTargetError(CausawareError):
    pass


class ConfigError(ValidationError):
    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f" (key '{key}'"
            where += f", line {line})" if line is not None else ")"
        super().__init__(message + where)
        self.key = key
        self.line = line
