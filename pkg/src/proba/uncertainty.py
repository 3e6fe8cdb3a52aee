"""3-D/2-D Gaussian landmarks and the Bhattacharyya overlap coefficient.

For multivariate Gaussians the coefficient is

    BC = exp(-1/4 ||mu1 - mu2||^2_{(S1+S2)^{-1}}
             - 1/2 log( det(Sbar) / sqrt(det S1 * det S2) )),

with the mixture covariance ``Sbar = (S1 + S2) / 2``.  This is the
normalization for which BC(g, g) = 1 in any dimension.  A variant that
divides ``det(S1 + S2)`` by ``2 sqrt(det S1 det S2)`` instead (which
evaluates to 2^{(1-d)/2} for identical Gaussians, i.e. 1/2 in 3-D) is
available behind ``printed_normalization=True`` for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveRadius, SingularCovariance
from .geometry import Intrinsics, Pose, backproject, rotation_matrix

_DET_FLOOR = 1e-300


@dataclass
class Gaussian3:
    """3-D Gaussian: mean in scene coordinates, 3x3 covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.covariance = np.asarray(self.covariance, dtype=np.float64).reshape(3, 3)
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")

    @classmethod
    def isotropic(cls, mean: np.ndarray, sigma: float) -> "Gaussian3":
        if sigma <= 0:
            raise NonPositiveRadius(f"sigma must be positive, got {sigma}")
        return cls(mean, sigma**2 * np.eye(3))


@dataclass
class Gaussian2:
    """Image-plane Gaussian: pixel mean, 2x2 covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        self.covariance = np.asarray(self.covariance, dtype=np.float64).reshape(2, 2)


@dataclass
class AnisotropicRadius:
    """Oriented per-axis radii: rotation (axis-angle) + log standard deviations."""

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    log_sigmas: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3)
        self.log_sigmas = np.asarray(self.log_sigmas, dtype=np.float64).reshape(3)


def realize_covariance(a: AnisotropicRadius) -> np.ndarray:
    """R diag(sigma_1^2, sigma_2^2, sigma_3^2) R^T with sigma_k = exp(log_sigmas[k])."""
    R = rotation_matrix(a.rotation)
    return R @ np.diag(np.exp(2.0 * a.log_sigmas)) @ R.T


def bhattacharyya_coefficient(g1: Gaussian3, g2: Gaussian3,
                              printed_normalization: bool = False) -> float:
    """Overlap of two Gaussians in (0, 1]; 1 exactly when they coincide."""
    s1, s2 = g1.covariance, g2.covariance
    d1, d2 = np.linalg.det(s1), np.linalg.det(s2)
    if d1 <= _DET_FLOOR or d2 <= _DET_FLOOR:
        raise SingularCovariance("component covariance is numerically singular")
    total = s1 + s2
    diff = g1.mean - g2.mean
    try:
        quad = 0.25 * float(diff @ np.linalg.solve(total, diff))
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("sum of covariances is singular") from exc
    dt = np.linalg.det(total)
    if dt <= _DET_FLOOR:
        raise SingularCovariance("sum of covariances is numerically singular")
    if printed_normalization:
        logterm = 0.5 * (np.log(dt) - np.log(2.0 * np.sqrt(d1 * d2)))
    else:
        dim = g1.mean.shape[0]
        logterm = 0.5 * (np.log(dt) - dim * np.log(2.0) - 0.5 * (np.log(d1) + np.log(d2)))
    return float(np.exp(-quad - logterm))


def world_gaussian(K: Intrinsics, T: Pose, p: np.ndarray, d: float,
                   radius) -> Gaussian3:
    """World-frame Gaussian for an observation backprojected to depth ``d``.

    ``radius`` is either a scalar standard deviation (isotropic, whose
    covariance is rotation-invariant and therefore pose-independent) or an
    AnisotropicRadius defined in the camera frame, rotated into the world.
    """
    x_cam = backproject(K, p, d)
    R = rotation_matrix(T.rotation)
    mean = R.T @ (x_cam - T.translation)
    if isinstance(radius, AnisotropicRadius):
        cov = R.T @ realize_covariance(radius) @ R
    else:
        if radius <= 0:
            raise NonPositiveRadius(f"sigma must be positive, got {radius}")
        cov = float(radius) ** 2 * np.eye(3)
    return Gaussian3(mean, cov)
