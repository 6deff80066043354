"""Exception hierarchy shared by all modules.

Each class carries a short ``code`` string so the command-line front end can
map failures onto exit statuses without inspecting messages.
"""


class PSplineError(Exception):
    """Base class for all package errors."""

    code = "error"


class InvalidParameterError(PSplineError, ValueError):
    code = "invalid-parameter"


class DomainError(PSplineError, ValueError):
    code = "domain-error"


class DimensionMismatchError(PSplineError, ValueError):
    code = "dimension-mismatch"


class InsufficientDataError(PSplineError, ValueError):
    code = "insufficient-data"


class DegenerateScaleError(PSplineError, ArithmeticError):
    code = "degenerate-scale"


class SingularSystemError(PSplineError, ArithmeticError):
    code = "singular-system"


class SaturatedFitError(PSplineError, ArithmeticError):
    code = "saturated-fit"
