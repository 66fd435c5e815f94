"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its stable exit-code contract (2 config, 3 data, 4 numerical).
"""


class LmBicError(Exception):
    exit_code = 1


class ConfigError(LmBicError, ValueError):
    exit_code = 2


class InvalidArgumentError(ConfigError):
    """An argument is outside the domain of the operation."""


class SpecGrammarError(ConfigError):
    """A model-spec expression could not be parsed."""


class SpecNotNestedError(ConfigError):
    """A candidate form uses a term that is not in the shared full basis."""


class NotApplicableError(InvalidArgumentError):
    """Statistic undefined for the request (e.g. a t-statistic with r = 0)."""


class NotPSDError(InvalidArgumentError):
    pass


class DataError(LmBicError, ValueError):
    exit_code = 3


class InsufficientDataError(DataError):
    pass


class DegenerateFitError(LmBicError, ArithmeticError):
    """Residual variance is zero, so the LM statistic is undefined."""

    exit_code = 4


class DegenerateDesignError(DegenerateFitError):
    """The weighted restriction matrix is numerically zero."""


class SelectionFailedError(DegenerateFitError):
    """No candidate form could be evaluated."""
