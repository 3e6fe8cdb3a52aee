"""Scene optimization problem: frames, correspondence set, parameter block.

The packed parameter vector is laid out as

    [ poses (6 per frame: axis-angle, translation) | fov (1, degrees)
      | log-depths (2 per correspondence: d_p then d_q)
      | radii (2 or 12 per correspondence) ]

Depths and Gaussian radii are stored in log space so any unconstrained
first-order update decodes to a strictly positive value.  Each
correspondence owns the four scalars (d_p, d_q, log sigma_p, log sigma_q);
no multi-view tracks are built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import LengthMismatch
from .geometry import Pose

if TYPE_CHECKING:  # pragma: no cover
    from .losses import LossConfig

FOV_INIT = 60.0
LOG_SIGMA_INIT = float(np.log(0.1))
DEPTH_INIT_MEAN = 1.0
DEPTH_INIT_STD = 0.5
DEPTH_INIT_CLAMP = 0.05


@dataclass
class Frame:
    id: int
    width: int
    height: int
    gt_pose: Pose | None = None
    gt_fov: float | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame {self.id}: dimensions must be positive")


@dataclass
class Correspondence:
    """A matched pixel pair between two frames.

    ``param_indices`` (absolute positions of d_p, d_q, log sigma_p,
    log sigma_q in the flat vector) is filled in by SceneProblem.
    """

    frame_i: int
    frame_j: int
    p: np.ndarray
    q: np.ndarray
    confidence: float = 1.0
    param_indices: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(2)
        self.q = np.asarray(self.q, dtype=np.float64).reshape(2)
        if self.frame_i == self.frame_j:
            raise ValueError("a correspondence must join two distinct frames")


@dataclass(frozen=True)
class ParamLayout:
    """Slices of the packed vector, one per parameter group."""

    n_frames: int
    n_corr: int
    anisotropic: bool = False

    @property
    def radius_width(self) -> int:
        return 6 if self.anisotropic else 1

    @property
    def pose(self) -> slice:
        return slice(0, 6 * self.n_frames)

    @property
    def fov(self) -> slice:
        return slice(6 * self.n_frames, 6 * self.n_frames + 1)

    @property
    def depth(self) -> slice:
        lo = 6 * self.n_frames + 1
        return slice(lo, lo + 2 * self.n_corr)

    @property
    def radius(self) -> slice:
        lo = 6 * self.n_frames + 1 + 2 * self.n_corr
        return slice(lo, lo + 2 * self.n_corr * self.radius_width)

    @property
    def length(self) -> int:
        return self.radius.stop

    def group_slices(self) -> dict[str, slice]:
        return {"pose": self.pose, "fov": self.fov,
                "depth": self.depth, "radius": self.radius}

    def tags(self) -> np.ndarray:
        out = np.empty(self.length, dtype=object)
        for name, sl in self.group_slices().items():
            out[sl] = name
        return out


@dataclass
class ParameterBlock:
    """Structured view of the optimization variables."""

    poses: np.ndarray            # (F, 6) axis-angle + translation
    fov: float                   # degrees, shared across frames
    log_depths: np.ndarray       # (2C,)
    radii: np.ndarray            # (2C,) log sigma, or (2C, 6) anisotropic

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        self.log_depths = np.asarray(self.log_depths, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)

    @property
    def anisotropic(self) -> bool:
        return self.radii.ndim == 2

    def layout(self) -> ParamLayout:
        return ParamLayout(self.poses.shape[0], self.log_depths.shape[0] // 2,
                           self.anisotropic)

    def copy(self) -> "ParameterBlock":
        return ParameterBlock(self.poses.copy(), self.fov,
                              self.log_depths.copy(), self.radii.copy())

    def pose_list(self) -> list[Pose]:
        return [Pose(row[:3], row[3:]) for row in self.poses]

    def depths(self) -> np.ndarray:
        return np.exp(self.log_depths)


def pack(block: ParameterBlock) -> np.ndarray:
    """Flatten a block into one vector (bit-exact round trip with unpack)."""
    return np.concatenate([block.poses.reshape(-1),
                           np.array([block.fov], dtype=np.float64),
                           block.log_depths,
                           block.radii.reshape(-1)])


def unpack(flat: np.ndarray, layout: ParamLayout) -> ParameterBlock:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (layout.length,):
        raise LengthMismatch(
            f"expected a vector of length {layout.length}, got shape {flat.shape}")
    radii = flat[layout.radius]
    if layout.anisotropic:
        radii = radii.reshape(2 * layout.n_corr, 6)
    return ParameterBlock(flat[layout.pose].reshape(layout.n_frames, 6).copy(),
                          float(flat[layout.fov][0]),
                          flat[layout.depth].copy(),
                          radii.copy())


class SceneProblem:
    """Frames + correspondence graph + loss configuration.

    Immutable after construction except for ``params``, which the
    optimizer owns while loss evaluation reads it between updates.
    """

    def __init__(self, frames: list[Frame], correspondences: list[Correspondence],
                 config: "LossConfig"):
        if not correspondences:
            raise ValueError("the correspondence set must be non-empty")
        ids = [f.id for f in frames]
        if sorted(ids) != list(range(len(frames))):
            raise ValueError("frame ids must be dense 0..F-1")
        frames = sorted(frames, key=lambda f: f.id)
        valid = set(ids)
        for c in correspondences:
            if c.frame_i not in valid or c.frame_j not in valid:
                raise ValueError(f"correspondence references unknown frame "
                                 f"({c.frame_i}, {c.frame_j})")
        self.frames = frames
        self.correspondences = correspondences
        self.config = config
        self.params: ParameterBlock | None = None
        self._cache: dict = {}
        lay = self.layout
        for k, c in enumerate(correspondences):
            c.param_indices = (lay.depth.start + 2 * k,
                               lay.depth.start + 2 * k + 1,
                               lay.radius.start + 2 * k * lay.radius_width,
                               lay.radius.start + (2 * k + 1) * lay.radius_width)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_corr(self) -> int:
        return len(self.correspondences)

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(self.n_frames, self.n_corr, self.config.anisotropic)

    def has_ground_truth(self) -> bool:
        return all(f.gt_pose is not None for f in self.frames)

    def gt_poses(self) -> list[Pose]:
        return [f.gt_pose for f in self.frames]

    @property
    def gt_fov(self) -> float | None:
        return self.frames[0].gt_fov


def initialize(problem: SceneProblem, seed: int) -> ParameterBlock:
    """Initialization-free starting point: identity poses, random depths.

    Depths are sampled from Normal(1, 0.5^2), clamped to >= 0.05 before
    the log transform; radii start at sigma = 0.1 and the FOV at 60
    degrees.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    n = 2 * problem.n_corr
    depths = np.maximum(rng.normal(DEPTH_INIT_MEAN, DEPTH_INIT_STD, size=n),
                        DEPTH_INIT_CLAMP)
    if problem.config.anisotropic:
        radii = np.zeros((n, 6))
        radii[:, 3:] = LOG_SIGMA_INIT
    else:
        radii = np.full(n, LOG_SIGMA_INIT)
    return ParameterBlock(poses=np.zeros((problem.n_frames, 6)),
                          fov=FOV_INIT,
                          log_depths=np.log(depths),
                          radii=radii)
