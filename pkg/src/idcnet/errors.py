"""Exception types raised across the package."""


class IDCError(Exception):
    """Base class for all package errors."""


class InvalidDepthError(IDCError, ValueError):
    pass


class PixelBoundsError(IDCError, IndexError):
    pass


class BehindCameraError(IDCError, ValueError):
    pass


class EmptyWarpError(IDCError, ValueError):
    pass


class InsufficientFramesError(IDCError, ValueError):
    pass


class ShapeError(IDCError, ValueError):
    pass


class ConfigError(IDCError, ValueError):
    pass


class NumericError(IDCError, FloatingPointError):
    """Raised when a forward pass or loss produces non-finite values."""


class FormatError(IDCError, ValueError):
    """Malformed file contents (bad magic, version, or payload)."""


class TruncationError(FormatError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
