"""Exception hierarchy shared across the pipeline stages."""


class AmpiifdError(Exception):
    """Base class for every error raised by this package."""


class ImageIOError(AmpiifdError, OSError):
    """An image could not be read or written."""


class ConfigError(AmpiifdError, ValueError):
    """A parameter violates its documented invariant."""


class DegenerateError(AmpiifdError, ValueError):
    """Input geometry or data admits no unique solution."""


class UndescribableError(AmpiifdError):
    """A keypoint has no usable support for orientation or description."""


class NoModelError(AmpiifdError):
    """Robust estimation found no model with sufficient support."""


class StageError(AmpiifdError):
    """Wraps a failure inside one named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
