"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems are handled by the
argument parser, data problems (anything below except NumericError) exit
with 2, numeric failures with 3.
"""


class LofisrError(Exception):
    """Base class for all package errors."""


class GeometryError(LofisrError):
    """Invalid affine or incompatible voxel grids."""


class BoundsError(LofisrError):
    """Index or crop region outside the volume extent."""


class FormatError(LofisrError):
    """Unreadable or unsupported file content."""


class ConfigError(LofisrError):
    """Invalid configuration value or unknown configuration key."""


class InputError(LofisrError):
    """Operation input violates a precondition."""


class EstimationError(LofisrError):
    """A statistic or parameter estimate cannot be computed."""


class NumericError(LofisrError):
    """Non-finite values or failed numeric procedure at runtime."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
