"""Shared exception types.

Every contract violation raises one of these instead of a bare ValueError so
callers (and the CLI) can map failures to exit codes uniformly.
"""


class EcgAuthError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(EcgAuthError):
    """A file does not match the expected on-disk layout."""


class ParseError(EcgAuthError):
    """A row or field inside an otherwise well-formed file is invalid."""


class ContractError(EcgAuthError):
    """An operation was called with arguments violating its precondition."""


class BoundaryError(EcgAuthError):
    """A beat window would extend past the ends of the record."""


class ZeroVarianceError(EcgAuthError):
    """Correlation is undefined because one input is constant."""


class EnrollmentQualityError(EcgAuthError):
    """Enrollment data fails a quality gate (too few or too inconsistent beats)."""


class UndefinedMetricError(EcgAuthError):
    """A rate has a zero denominator; the value must be reported as N/A."""
