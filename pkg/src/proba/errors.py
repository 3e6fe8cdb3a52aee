"""Exception types shared across the package.

Validation-type errors map to CLI exit code 1, numerical aborts
(non-finite loss or gradient mid-optimization) to exit code 2.
"""


class ProbaError(Exception):
    """Base class for all package errors."""


class NonPositiveDepth(ProbaError):
    """Point at or behind the camera plane (z below the depth floor)."""


class NonPositiveRadius(ProbaError):
    """Gaussian radius must be strictly positive."""


class SingularCovariance(ProbaError):
    """Covariance matrix is numerically singular."""


class LengthMismatch(ProbaError):
    """Flat parameter vector does not match the expected layout length."""


class DimensionMismatch(ProbaError):
    """Optimizer state and gradient shapes disagree."""


class MissingGroundTruth(ProbaError):
    """Metric computation requested without ground-truth poses."""


class DegenerateScene(ProbaError):
    """Synthetic scene generation left a frame with too few correspondences."""


class EmptyAfterSampling(ProbaError):
    """Correspondence sampling removed every record."""


class OutOfRange(ProbaError):
    """Argument outside its documented range."""


class SceneFormatError(ProbaError):
    """Scene / config file failed schema validation."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NonFiniteLoss(ProbaError):
    """Loss evaluated to NaN/inf; carries the trace up to the failure."""

    def __init__(self, message: str = "loss is not finite", trace=None):
        super().__init__(message)
        self.trace = trace


class NonFiniteGradient(ProbaError):
    """Gradient evaluated to NaN/inf; carries the trace up to the failure."""

    def __init__(self, message: str = "gradient is not finite", trace=None):
        super().__init__(message)
        self.trace = trace
