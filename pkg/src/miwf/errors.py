"""Exception types shared across the package."""


class MIWFError(Exception):
    """Base class for all package errors."""


class NumericalHalt(MIWFError):
    """A degeneracy that stops a computation; ``reason`` is a short tag."""

    reason = "numerical_halt"

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DegenerateMetric(NumericalHalt):
    reason = "degenerate_metric"


class UmbilicDegeneracy(NumericalHalt):
    reason = "umbilic_degeneracy"


class NonFinite(NumericalHalt):
    reason = "non_finite"


class IrregularCurve(NumericalHalt):
    reason = "irregular_curve"


class AmbientMismatch(MIWFError):
    pass


class InversionCenterOnSurface(MIWFError):
    pass


class PoleOnSurface(MIWFError):
    pass


class ScheduleMismatch(MIWFError):
    pass


class ParseError(MIWFError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(MIWFError):
    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason
