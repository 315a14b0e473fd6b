"""Exception hierarchy.

Configuration problems raise :class:`ValidationError`; everything that goes
wrong inside a numerical routine derives from :class:`NumericalError` so the
CLI can map the two families onto distinct exit codes.
"""


class DividendEqError(Exception):
    """Base class for all package errors."""


class ValidationError(DividendEqError, ValueError):
    """One or more input constraints are violated.

    ``issues`` lists every violated constraint as ``(code, message)`` pairs,
    e.g. ``("NonPositiveSigma", "sigma must be > 0, got 0.0")``.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"{code}: {msg}" for code, msg in self.issues))

    @property
    def codes(self):
        return [code for code, _ in self.issues]


class NumericalError(DividendEqError, ArithmeticError):
    """Base class for solver failures."""

    def __init__(self, message, trail=None):
        super().__init__(message)
        self.trail = list(trail or [])


class NoSignChange(NumericalError):
    pass


class MaxIterExceeded(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class BracketNotFound(NumericalError):
    pass


class OutsideDomain(NumericalError):
    pass


class ConditionUndefined(NumericalError):
    pass


class InternalInconsistency(NumericalError):
    """Two independent computations of the same quantity disagree."""


class RootNotFound(NumericalError):
    """No admissible threshold pair was found; ``trail`` records the attempts."""


class ValidityScanFailed(NumericalError):
    """A root of the threshold equations failed the concavity/monotonicity scan."""
