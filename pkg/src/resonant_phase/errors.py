"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input, or a
point/loop that sits on or too near the degeneracy locus) and
:class:`ConvergenceError` (a numerical procedure needs more resolution).
The command line maps them to exit codes 2 and 3.
"""


class ResonantPhaseError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ResonantPhaseError, ValueError):
    pass


class ConvergenceError(ResonantPhaseError, ArithmeticError):
    pass


class InvalidArgumentError(ValidationError):
    pass


class InvalidSpecError(ValidationError):
    pass


class DegeneratePointError(ValidationError):
    """Raised when an eigenframe is requested where the two levels coincide."""

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class LocusDegenerateError(ValidationError):
    """|Gamma| = 0: the degeneracy circle collapses to the origin."""


class LoopTooCloseError(ValidationError):
    def __init__(self, message, parameter=None, distance=None):
        super().__init__(message)
        self.parameter = parameter
        self.distance = distance


class WindingUndefinedError(ValidationError):
    pass


class FormulaSingularError(ValidationError):
    pass


class NearDegeneracyError(ValidationError):
    pass


class WrongClassError(ValidationError):
    pass


class RefineError(ConvergenceError):
    pass


class AmbiguousCrossingError(RefineError):
    pass


class AdiabaticityViolationError(ConvergenceError):
    pass
