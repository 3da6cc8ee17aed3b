"""Exception hierarchy shared by all oampdc modules.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3 and grid-resolution problems with 4.
"""


class OampdcError(Exception):
    """Base class for all package errors."""


class ConfigError(OampdcError):
    """Invalid configuration value, file or command-line combination."""


class NumericalError(OampdcError):
    """A numerical procedure failed (SVD, series, curve fit, ...)."""


class SeriesOverflowError(NumericalError):
    """Power series did not reach the requested accuracy.

    Raised by the complex Bessel evaluation when cancellation or
    non-convergence makes the result untrustworthy; the caller must
    shrink the radial integration domain.
    """


class ResolutionError(OampdcError):
    """The requested computation is not resolved by the current grid."""


class TruncationError(ResolutionError):
    """The OAM index window misses a non-negligible part of the kernel."""

    def __init__(self, message, suggested_halfwidth=None):
        super().__init__(message)
        self.suggested_halfwidth = suggested_halfwidth
