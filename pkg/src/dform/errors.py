"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in dform.cli; library code raises these
and never calls sys.exit.
"""


class DFormError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DFormError):
    """Invalid input data or configuration (CLI exit code 2)."""


class DimensionMismatch(ValidationError):
    pass


class DegreeMismatch(ValidationError):
    pass


class DegreeOverflow(ValidationError):
    """Requested degrees exceed the ambient dimension (zero fiber).

    Raised instead of silently returning zero; generic code that wants the
    zero-space convention goes through wedge_or_zero and friends.
    """


class DegreeUnderflow(ValidationError):
    """Requested degrees would drop below zero."""


class OutOfDomain(ValidationError):
    """Point outside the chart box or past the conformal-factor pole."""


class NotBoundaryNode(ValidationError):
    pass


class NotBoundaryFace(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class BasisMismatch(ValidationError):
    pass


class FieldFormatError(ValidationError):
    """Malformed field file (bad header, payload length, or version)."""


class ConfigError(ValidationError):
    """Unknown configuration key or out-of-range value."""


class SolverError(DFormError):
    """Solver failures (CLI exit code 3)."""


class SolverDiverged(SolverError):
    pass


class TooLarge(SolverError):
    """Problem size exceeds the cap for an experimental solver."""


class NoSpectralGap(DFormError):
    """Ambiguous kernel dimension in a thresholded SVD (CLI exit code 4)."""
