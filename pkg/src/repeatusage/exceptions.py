"""Exception types shared across the package."""


class NotEstimable(ValueError):
    """The data carry no information about the requested parameters.

    Raised for tables with too few users, with no repeat usage, or where
    the one-time-user share and ``q`` cannot be separated.
    """


class NotTestable(ValueError):
    """Too few cells survive tail merging to run a chi-square test."""


class NumericDomainError(ArithmeticError):
    """A probability underflowed where a finite logarithm is required."""


class LogFormatError(ValueError):
    """The header or column layout of an access log is inconsistent."""
