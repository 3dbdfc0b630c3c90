"""Exception types shared across the package."""


class FBMSError(Exception):
    """Base class for all package errors."""


class ValidationError(FBMSError, ValueError):
    """Input parameters outside the admissible domain."""


class NumericalFailure(FBMSError, RuntimeError):
    """A numerical procedure could not produce a trustworthy answer."""


class DomainError(ValidationError):
    pass


class NoExit(NumericalFailure):
    pass


class StepFailure(NumericalFailure):
    pass


class DomainViolation(NumericalFailure):
    pass


class BracketFailure(NumericalFailure):
    pass


class OutsideWing(ValidationError):
    pass


class NoIntersection(NumericalFailure):
    pass


class CalibrationFailure(NumericalFailure):
    pass


class ResolutionError(ValidationError):
    pass


class MatchFailure(NumericalFailure):
    pass


class GuardFailure(NumericalFailure):
    pass


class DegenerateTriangle(NumericalFailure):
    pass


class ConvergenceWarning(UserWarning):
    pass
