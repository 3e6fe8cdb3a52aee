"""Pinhole camera model, rigid transforms, and uncertainty propagation.

Conventions used throughout the package:

* A ``Pose`` is a world-to-camera transform stored as an axis-angle
  rotation vector (radians times unit axis) plus a translation, i.e.
  ``x_cam = R @ x_world + t``.
* Camera points and pixels are plain float arrays of shape ``(..., 3)``
  and ``(..., 2)``; there is no wrapper class for them.
* Intrinsics are parameterized by the horizontal field of view in
  degrees (the quantity that gets optimized), with the focal length
  derived as ``f = (W/2) / tan(fov/2)`` and the principal point pinned
  at the image center.

The projected covariance of an isotropic 3-D Gaussian with standard
deviation ``sigma`` at camera point ``(X, Y, Z)`` is

    Sigma = sigma^2 * J J^T = (f^2 sigma^2 / Z^2) * A,
    A = [[1 + X^2/Z^2, X Y / Z^2], [X Y / Z^2, 1 + Y^2/Z^2]],

with ``J`` the Jacobian of the full pixel projection.  ``A`` satisfies
``det A = 1 + (X^2 + Y^2) / Z^2``, which the tests use as an identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NonPositiveDepth, NonPositiveRadius

# Projections and backprojections reject z at or below this value so that
# 1/Z and log Z stay finite.
DEPTH_FLOOR = 1e-6

# Below this squared rotation angle the Rodrigues coefficients switch to
# their series expansions (branch mismatch ~u^3/5040, far below 1e-12).
_SMALL_ANGLE_SQ = 1e-8


def rodrigues(rvec):
    """Rotation matrices from axis-angle vectors of shape ``(..., 3)``.

    Works on plain arrays and on autodiff Tensors; smooth at zero
    rotation (the optimizer starts every pose there).
    """
    rv = rvec if isinstance(rvec, ad.Tensor) else np.asarray(rvec, dtype=np.float64)
    r1 = rv[..., 0]
    r2 = rv[..., 1]
    r3 = rv[..., 2]
    u = r1 * r1 + r2 * r2 + r3 * r3
    small = ad.value(u) < _SMALL_ANGLE_SQ
    u_safe = ad.where(small, 1.0, u)
    th = ad.sqrt(u_safe)
    a = ad.where(small, 1.0 - u / 6.0 + u * u / 120.0, ad.sin(th) / th)
    b = ad.where(small, 0.5 - u / 24.0 + u * u / 720.0, (1.0 - ad.cos(th)) / u_safe)
    # R = (1 - b*u) I + a [r]_x + b r r^T, written out per component
    m = [
        1.0 - b * (r2 * r2 + r3 * r3),
        b * r1 * r2 - a * r3,
        b * r1 * r3 + a * r2,
        b * r1 * r2 + a * r3,
        1.0 - b * (r1 * r1 + r3 * r3),
        b * r2 * r3 - a * r1,
        b * r1 * r3 - a * r2,
        b * r2 * r3 + a * r1,
        1.0 - b * (r1 * r1 + r2 * r2),
    ]
    flat = ad.stack(m, axis=-1)
    shape = ad.value(flat).shape[:-1] + (3, 3)
    return ad.reshape(flat, shape)


def rotation_matrix(rotation: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix for one axis-angle vector."""
    return np.asarray(rodrigues(np.asarray(rotation, dtype=np.float64)))


def rotation_vector(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector for a rotation matrix (inverse of rotation_matrix)."""
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    c = min(1.0, max(-1.0, c))
    theta = math.acos(c)
    if theta < 1e-7:
        # R ~ I + [r]_x for small angles
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if math.pi - theta < 1e-5:
        # near pi the skew part vanishes; recover the axis from R + I
        M = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(M), 0.0))
        k = int(np.argmax(axis))
        axis = M[:, k] / max(axis[k], 1e-12)
        axis /= np.linalg.norm(axis)
        # fix the sign using the skew-symmetric part where it survives
        skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(skew, axis) < 0:
            axis = -axis
        return theta * axis
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta / (2.0 * math.sin(theta)) * axis


@dataclass
class Pose:
    """World-to-camera rigid transform, axis-angle + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def matrix(self) -> np.ndarray:
        """3x4 row-major [R | t]."""
        return np.concatenate([rotation_matrix(self.rotation),
                               self.translation[:, None]], axis=1)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(rotation_vector(m[:, :3]), m[:, 3])


def compose(a: Pose, b: Pose) -> Pose:
    """Transform equal to applying b first, then a."""
    Ra = rotation_matrix(a.rotation)
    Rb = rotation_matrix(b.rotation)
    return Pose(rotation_vector(Ra @ Rb), Ra @ b.translation + a.translation)


def inverse(a: Pose) -> Pose:
    R = rotation_matrix(a.rotation)
    return Pose(-a.rotation, -R.T @ a.translation)


def apply(a: Pose, x: np.ndarray) -> np.ndarray:
    """Map world coordinates into the camera frame of ``a``."""
    x = np.asarray(x, dtype=np.float64)
    return x @ rotation_matrix(a.rotation).T + a.translation


def relative(a: Pose, b: Pose) -> Pose:
    """Pose mapping camera-a coordinates into camera-b coordinates."""
    return compose(b, inverse(a))


@dataclass
class Intrinsics:
    """Shared pinhole intrinsics: horizontal FOV (degrees) + image size."""

    fov: float
    width: int
    height: int

    def __post_init__(self):
        if not 1.0 < self.fov < 179.0:
            raise ValueError(f"fov must lie in (1, 179) degrees, got {self.fov}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def focal(self) -> float:
        return focal_from_fov(self.fov, self.width)

    def matrix(self) -> np.ndarray:
        f = self.focal
        return np.array([[f, 0.0, self.width / 2.0],
                         [0.0, f, self.height / 2.0],
                         [0.0, 0.0, 1.0]])


def focal_from_fov(fov_deg, width):
    """Focal length in pixels from horizontal FOV; generic over backends."""
    half = fov_deg * (math.pi / 360.0)
    return (width / 2.0) / ad.tan(half) if isinstance(fov_deg, ad.Tensor) \
        else (width / 2.0) / math.tan(half)


def project(K: Intrinsics, x: np.ndarray) -> np.ndarray:
    """Pixel coordinates of camera points; raises behind the camera."""
    x = np.asarray(x, dtype=np.float64)
    z = x[..., 2]
    if np.any(z <= DEPTH_FLOOR):
        raise NonPositiveDepth(f"z={np.min(z):g} at or behind the camera plane")
    f = K.focal
    return np.stack([f * x[..., 0] / z + K.width / 2.0,
                     f * x[..., 1] / z + K.height / 2.0], axis=-1)


def backproject(K: Intrinsics, p: np.ndarray, d) -> np.ndarray:
    """Camera point at depth ``d`` along the ray through pixel ``p``."""
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= DEPTH_FLOOR):
        raise NonPositiveDepth(f"depth {np.min(d):g} at or below the floor")
    f = K.focal
    return np.stack([(p[..., 0] - K.width / 2.0) * d / f,
                     (p[..., 1] - K.height / 2.0) * d / f,
                     np.broadcast_to(d, p[..., 0].shape)], axis=-1)


def propagation_matrix_A(x: np.ndarray) -> np.ndarray:
    """The 2x2 shape factor of the projected covariance at camera point x."""
    x = np.asarray(x, dtype=np.float64)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    if np.any(Z <= DEPTH_FLOOR):
        raise NonPositiveDepth(f"z={np.min(Z):g} at or behind the camera plane")
    a11 = 1.0 + (X / Z) ** 2
    a12 = X * Y / Z**2
    a22 = 1.0 + (Y / Z) ** 2
    out = np.stack([a11, a12, a12, a22], axis=-1)
    return out.reshape(out.shape[:-1] + (2, 2))


def projected_covariance(K: Intrinsics, x: np.ndarray, sigma: float) -> np.ndarray:
    """Image-plane covariance (f^2 sigma^2 / Z^2) * A of an isotropic Gaussian."""
    if sigma <= 0:
        raise NonPositiveRadius(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    Z = x[..., 2]
    A = propagation_matrix_A(x)
    scale = (K.focal * sigma) ** 2 / Z**2
    return scale[..., None, None] * A if A.ndim > 2 else scale * A
