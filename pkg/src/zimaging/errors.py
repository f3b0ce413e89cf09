"""Exception types raised across the package."""


class ZImagingError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(ZImagingError, ValueError):
    pass


class UndefinedQError(ZImagingError, ValueError):
    """Mandel Q requested for a pixel with zero mean."""


class InsufficientSamplesError(ZImagingError, ValueError):
    pass


class ShapeMismatchError(ZImagingError, ValueError):
    pass


class AccumulatorOverflowError(ZImagingError, OverflowError):
    pass


class NotEstimableError(ZImagingError, ValueError):
    pass


class NotFittableError(ZImagingError, ValueError):
    pass


class NotRecoverableError(ZImagingError, ValueError):
    pass


class ConfigError(ZImagingError, ValueError):
    """Malformed scenario file or CSV input."""
