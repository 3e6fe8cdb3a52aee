"""Synthetic multi-view scenes with exact ground truth.

Scene layout: points are sampled uniformly in a box of side 1.2 whose
center sits 0.55 units from the origin toward the camera rig, and the
``orbit`` rig places cameras on a circular arc of radius 1.5 (height
0.35) looking at the origin.  Ground-truth depths then center near 1
(matching the depth initializer's mean, so the depth field starts
statistically close to truth) while the short camera-to-point range
keeps triangulation angles wide, which is what pins the field of view;
the arc is gentle (11 degrees times the baseline factor) so that
identity-initialized poses unfold reliably.  ``forward_walk`` drives the
cameras toward the box instead.

Observations are projected with the ground-truth intrinsics, culled at
the image bounds and a near plane, perturbed with Gaussian pixel noise,
and a chosen fraction of correspondences is turned into outliers by
displacing the matched pixel uniformly up to ``outlier_radius``.
Everything is deterministic for a given seed, and the ground-truth
parameter block (poses, FOV, per-endpoint depths) is returned with the
problem so losses can be evaluated at the true optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScene
from .geometry import Intrinsics, Pose, rotation_matrix, rotation_vector
from .problem import (LOG_SIGMA_INIT, Correspondence, Frame, ParameterBlock,
                      SceneProblem)

RIGS = ("orbit", "forward_walk")

# Rig geometry at baseline factor 1 (see module docstring for rationale).
_ORBIT_RADIUS = 1.5
_ORBIT_HEIGHT = 0.35
_ORBIT_ARC_DEG = 11.0
_BOX_SIDE = 1.2
_BOX_OFFSET = 0.55
_WALK_START = -2.4
_WALK_STEP = 0.22
_NEAR_PLANE = 0.05


@dataclass
class SynthConfig:
    n_frames: int = 5
    n_points: int = 200
    fov_gt: float = 60.0
    width: int = 640
    height: int = 480
    rig: str = "orbit"
    baseline: float = 1.0
    pixel_noise_std: float = 0.0
    outlier_rate: float = 0.0
    outlier_radius: float = 80.0
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("need at least 2 frames")
        if self.n_points < 8:
            raise ValueError("need at least 8 points")
        if self.rig not in RIGS:
            raise ValueError(f"unknown rig {self.rig!r}")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ValueError("outlier_rate must lie in [0, 1)")


def _look_at(position: np.ndarray, target: np.ndarray) -> Pose:
    """World-to-camera pose for a camera at ``position`` looking at ``target``."""
    z = target - position
    z = z / np.linalg.norm(z)
    x = np.cross(z, np.array([0.0, 0.0, 1.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=0)
    return Pose(rotation_vector(R), -R @ position)


def _rig_positions(cfg: SynthConfig) -> np.ndarray:
    k = np.arange(cfg.n_frames, dtype=np.float64)
    if cfg.rig == "orbit":
        arc = math.radians(_ORBIT_ARC_DEG) * cfg.baseline
        theta = (k / max(cfg.n_frames - 1, 1) - 0.5) * arc
        return np.stack([_ORBIT_RADIUS * np.cos(theta),
                         _ORBIT_RADIUS * np.sin(theta),
                         np.full_like(theta, _ORBIT_HEIGHT)], axis=-1)
    # forward walk: approach the box with a small lateral weave
    lateral = 0.12 * cfg.baseline * np.sin(1.7 * k)
    return np.stack([_WALK_START + _WALK_STEP * cfg.baseline * k,
                     lateral,
                     np.full_like(k, _ORBIT_HEIGHT)], axis=-1)


def generate(cfg: SynthConfig, loss_config=None) -> tuple[SceneProblem, ParameterBlock]:
    """Build the scene and its ground-truth parameter block."""
    if loss_config is None:
        from .losses import LossConfig
        loss_config = LossConfig()
    rng = np.random.default_rng(cfg.seed)
    points = rng.uniform(-_BOX_SIDE / 2, _BOX_SIDE / 2, (cfg.n_points, 3))
    points[:, 0] += _BOX_OFFSET
    K = Intrinsics(cfg.fov_gt, cfg.width, cfg.height)
    f = K.focal
    poses = [_look_at(p, np.zeros(3)) for p in _rig_positions(cfg)]

    cam_pts = np.empty((cfg.n_frames, cfg.n_points, 3))
    pix = np.empty((cfg.n_frames, cfg.n_points, 2))
    visible = np.zeros((cfg.n_frames, cfg.n_points), dtype=bool)
    for i, pose in enumerate(poses):
        R = rotation_matrix(pose.rotation)
        xc = points @ R.T + pose.translation
        cam_pts[i] = xc
        z = xc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = f * xc[:, 0] / z + cfg.width / 2.0
            v = f * xc[:, 1] / z + cfg.height / 2.0
        pix[i] = np.stack([u, v], axis=-1)
        visible[i] = ((z > _NEAR_PLANE) & (u >= 0) & (u < cfg.width)
                      & (v >= 0) & (v < cfg.height))

    noisy = pix + rng.normal(0.0, cfg.pixel_noise_std, size=pix.shape) \
        if cfg.pixel_noise_std > 0 else pix.copy()

    correspondences: list[Correspondence] = []
    gt_depths: list[float] = []
    for i in range(cfg.n_frames):
        for j in range(i + 1, cfg.n_frames):
            for n in np.nonzero(visible[i] & visible[j])[0]:
                correspondences.append(Correspondence(i, j, noisy[i, n], noisy[j, n]))
                gt_depths.extend([cam_pts[i, n, 2], cam_pts[j, n, 2]])

    n_corr = len(correspondences)
    n_out = int(round(cfg.outlier_rate * n_corr))
    if n_out > 0:
        chosen = rng.choice(n_corr, size=n_out, replace=False)
        angles = rng.uniform(0.0, 2.0 * math.pi, n_out)
        mags = rng.uniform(0.0, cfg.outlier_radius, n_out)
        for c, ang, m in zip(chosen, angles, mags):
            correspondences[c].q = correspondences[c].q + m * np.array(
                [math.cos(ang), math.sin(ang)])

    counts = np.zeros(cfg.n_frames, dtype=int)
    for c in correspondences:
        counts[c.frame_i] += 1
        counts[c.frame_j] += 1
    if n_corr == 0 or counts.min() < 8:
        raise DegenerateScene(
            f"frame correspondence counts {counts.tolist()} (need >= 8 each)")

    frames = [Frame(i, cfg.width, cfg.height, gt_pose=poses[i], gt_fov=cfg.fov_gt)
              for i in range(cfg.n_frames)]
    problem = SceneProblem(frames, correspondences, loss_config)

    if loss_config.anisotropic:
        radii = np.zeros((2 * n_corr, 6))
        radii[:, 3:] = LOG_SIGMA_INIT
    else:
        radii = np.full(2 * n_corr, LOG_SIGMA_INIT)
    gt_block = ParameterBlock(
        poses=np.stack([np.concatenate([p.rotation, p.translation]) for p in poses]),
        fov=cfg.fov_gt,
        log_depths=np.log(np.array(gt_depths)),
        radii=radii)
    return problem, gt_block


def perturb_gt(params_gt: ParameterBlock, pose_noise_deg: float,
               depth_noise_rel: float, seed: int) -> ParameterBlock:
    """Bounded random perturbation of a ground-truth block.

    Each pose is rotated about a random axis by an angle uniform in
    [0, pose_noise_deg] (so relative rotation errors stay within twice
    that bound) and translated inside a ball of radius 0.01 scene units
    per degree of pose noise; depths get relative noise uniform in
    [-depth_noise_rel, depth_noise_rel].
    """
    rng = np.random.default_rng(seed)
    out = params_gt.copy()
    t_radius = 0.01 * pose_noise_deg
    for k in range(out.poses.shape[0]):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = math.radians(rng.uniform(0.0, pose_noise_deg))
        if angle > 0.0:  # keep the zero-noise block bit-identical
            P = rotation_matrix(angle * axis)
            R = rotation_matrix(out.poses[k, :3])
            out.poses[k, :3] = rotation_vector(P @ R)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        out.poses[k, 3:] += rng.uniform(0.0, t_radius) * direction
    u = rng.uniform(-depth_noise_rel, depth_noise_rel, size=out.log_depths.shape)
    out.log_depths = out.log_depths + np.log1p(u)
    return out
