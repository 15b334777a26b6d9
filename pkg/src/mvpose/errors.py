"""Exception types raised across the package."""


class MvposeError(Exception):
    """Base class for all package errors."""


class ObjParseError(MvposeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BehindCameraError(MvposeError, ValueError):
    """A point that must be projected lies on or behind the image plane."""


class DegenerateViewError(MvposeError, ValueError):
    """No face of the mesh survives near-plane culling in a view."""


class EmptyMaskError(MvposeError, ValueError):
    pass


class ConfigError(MvposeError, ValueError):
    pass


class NumericalError(MvposeError, RuntimeError):
    """Non-finite loss or gradient during optimization."""
