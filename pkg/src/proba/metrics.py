"""Relative-pose evaluation metrics: RRA, RTA, mAA, and FOV error.

All pose metrics are computed over every unordered frame pair from the
*relative* poses, so they are invariant to the global rigid-transform
(and scale) ambiguity of the reconstruction.  Translation error is the
angle between unit relative-translation directions, since scale is not
observable.  mAA@tau counts pairs whose rotation AND translation errors
are both below tau (joint-threshold convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingGroundTruth
from .geometry import Pose, rotation_matrix

TAUS = (5, 10, 15)


@dataclass
class PairError:
    pair: tuple[int, int]
    rot_err: float    # degrees in [0, 180]
    trans_err: float  # degrees in [0, 180]


@dataclass
class MetricSummary:
    rra5: float
    rra10: float
    rra15: float
    rta5: float
    rta10: float
    rta15: float
    maa5: float
    maa10: float
    maa15: float
    fov_error: float = float("nan")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("rra5", "rra10", "rra15", "rta5", "rta10", "rta15",
                 "maa5", "maa10", "maa15", "fov_error")}


def _relative(poses: list[Pose], i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    Ri = rotation_matrix(poses[i].rotation)
    Rj = rotation_matrix(poses[j].rotation)
    R = Rj @ Ri.T
    t = poses[j].translation - R @ poses[i].translation
    return R, t


def _angle_deg(R_est: np.ndarray, R_gt: np.ndarray) -> float:
    c = (np.trace(R_est.T @ R_gt) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def _direction_angle_deg(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    n_gt = np.linalg.norm(t_gt)
    if n_gt < 1e-9:
        # pure-rotation pair by convention
        return 0.0
    u = t_est / max(np.linalg.norm(t_est), 1e-15)
    v = t_gt / n_gt
    c = float(np.dot(u, v))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def relative_pose_errors(est: list[Pose], gt: list[Pose]) -> list[PairError]:
    """Rotation/translation-direction errors for every unordered frame pair."""
    if gt is None or any(g is None for g in gt):
        raise MissingGroundTruth("ground-truth poses are required")
    if len(est) != len(gt) or len(est) < 2:
        raise MissingGroundTruth("need >= 2 frames with matching ground truth")
    out = []
    for i in range(len(est)):
        for j in range(i + 1, len(est)):
            Re, te = _relative(est, i, j)
            Rg, tg = _relative(gt, i, j)
            out.append(PairError((i, j), _angle_deg(Re, Rg),
                                 _direction_angle_deg(te, tg)))
    return out


def accuracy_at(errors: list[PairError], tau: float) -> tuple[float, float, float]:
    """(RRA, RTA, mAA) percentages at threshold tau degrees."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = len(errors)
    if n == 0:
        return 0.0, 0.0, 0.0
    rra = 100.0 * sum(e.rot_err < tau for e in errors) / n
    rta = 100.0 * sum(e.trans_err < tau for e in errors) / n
    maa = 100.0 * sum(max(e.rot_err, e.trans_err) < tau for e in errors) / n
    return rra, rta, maa


def fov_error(est_fov: float, gt_fov: float) -> float:
    return abs(est_fov - gt_fov)


def summarize(est: list[Pose], gt: list[Pose],
              est_fov: float | None = None,
              gt_fov: float | None = None) -> MetricSummary:
    errors = relative_pose_errors(est, gt)
    vals = {}
    for tau in TAUS:
        rra, rta, maa = accuracy_at(errors, tau)
        vals[f"rra{tau}"] = rra
        vals[f"rta{tau}"] = rta
        vals[f"maa{tau}"] = maa
    fe = float("nan")
    if est_fov is not None and gt_fov is not None:
        fe = fov_error(est_fov, gt_fov)
    return MetricSummary(fov_error=fe, **vals)
