"""Exception hierarchy shared by every module."""


class ViscoIndentError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ViscoIndentError, ValueError):
    """Non-finite or out-of-domain input."""


class NumericalSingularityError(ViscoIndentError, ArithmeticError):
    pass


class DivergenceError(ViscoIndentError, ArithmeticError):
    """Integrator produced non-finite or runaway strain."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class InvalidGeometryError(ViscoIndentError, ValueError):
    pass


class NoseDetectedError(ViscoIndentError, ValueError):
    """Unloading slope is negative: creep dominates the start of unloading."""


class CorrectionInvalidError(ViscoIndentError, ValueError):
    pass


class TipStifferError(ViscoIndentError, ValueError):
    """Measured reduced modulus is incompatible with the indenter's elastic constants."""


class DivisionGuardError(ViscoIndentError, ZeroDivisionError):
    pass


class ConditioningError(ViscoIndentError, ArithmeticError):
    pass


class ForwardModelError(ViscoIndentError):
    """One or more forward evaluations failed while building snapshots."""

    def __init__(self, message, failed_columns):
        super().__init__(message)
        self.failed_columns = list(failed_columns)


class InitializationError(ViscoIndentError):
    pass


class MissingArtifactError(ViscoIndentError, FileNotFoundError):
    pass
