"""First-order optimization loop: decoupled-weight-decay Adam with
per-group learning rates, plus convergence-trace recording.

The step uses the usual bias-corrected moments,

    m_hat = m / (1 - beta1^t),   v_hat = v / (1 - beta2^t),
    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta),

with the learning rate chosen per parameter group: 1e-3 for FOV and
depths, 1e-2 for poses and radii (so early updates concentrate on poses
and radii), and weight decay zero by default.  Gradients are full-batch;
the loop runs for exactly the configured iteration count with no early
stopping, so a run is a pure function of (problem, params, config).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics as _metrics
from .errors import DimensionMismatch, NonFiniteGradient, NonFiniteLoss
from .losses import LossConfig, LossReport, loss_and_gradient, total_loss
from .problem import ParameterBlock, SceneProblem, pack, unpack

LR_FOV_DEPTH = 1e-3
LR_POSE_RADIUS = 1e-2


@dataclass
class OptimizerConfig:
    lr_fov_depth: float = LR_FOV_DEPTH
    lr_pose_radius: float = LR_POSE_RADIUS
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    iterations: int = 10_000
    trace_every: int = 100
    seed: int = 0
    workers: int | None = None   # None -> PROBA_NUM_WORKERS or 1

    def __post_init__(self):
        if self.lr_fov_depth <= 0 or self.lr_pose_radius <= 0:
            raise ValueError("learning rates must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")

    def lr_vector(self, layout) -> np.ndarray:
        lr = np.empty(layout.length)
        lr[layout.pose] = self.lr_pose_radius
        lr[layout.fov] = self.lr_fov_depth
        lr[layout.depth] = self.lr_fov_depth
        lr[layout.radius] = self.lr_pose_radius
        return lr


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adamw_step(state: AdamState, params: np.ndarray, grad: np.ndarray,
               lr: np.ndarray, config: OptimizerConfig) -> np.ndarray:
    """One decoupled-weight-decay Adam update; mutates state, returns params."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise DimensionMismatch(
            f"params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    state.step += 1
    t = state.step
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = state.m / (1.0 - config.beta1**t)
    v_hat = state.v / (1.0 - config.beta2**t)
    update = m_hat / (np.sqrt(v_hat) + config.eps)
    if config.weight_decay != 0.0:
        update = update + config.weight_decay * params
    return params - lr * update


@dataclass
class TraceSnapshot:
    iteration: int
    total: float
    reproj: float
    bha: float
    rra5: float = float("nan")
    rra10: float = float("nan")
    rra15: float = float("nan")
    rta5: float = float("nan")
    rta10: float = float("nan")
    rta15: float = float("nan")
    maa5: float = float("nan")
    maa10: float = float("nan")
    maa15: float = float("nan")
    fov_err: float = float("nan")
    ms: float = 0.0


@dataclass
class Trace:
    snapshots: list[TraceSnapshot] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])

    @property
    def final(self) -> TraceSnapshot:
        return self.snapshots[-1]


def gradient(problem: SceneProblem, params, config: LossConfig | None = None,
             workers: int | None = None) -> np.ndarray:
    """Exact gradient of the configured total loss w.r.t. the packed vector."""
    flat = pack(params) if isinstance(params, ParameterBlock) else np.asarray(params)
    _, grad = loss_and_gradient(problem, flat, config, workers=workers)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient()
    return grad


def _snapshot(problem: SceneProblem, it: int, report: LossReport,
              flat: np.ndarray, t0: float) -> TraceSnapshot:
    snap = TraceSnapshot(iteration=it, total=report.total, reproj=report.reproj,
                         bha=report.bha, ms=(time.perf_counter() - t0) * 1e3)
    if problem.has_ground_truth():
        block = unpack(flat, problem.layout)
        errors = _metrics.relative_pose_errors(block.pose_list(), problem.gt_poses())
        for tau in (5, 10, 15):
            rra, rta, maa = _metrics.accuracy_at(errors, tau)
            setattr(snap, f"rra{tau}", rra)
            setattr(snap, f"rta{tau}", rta)
            setattr(snap, f"maa{tau}", maa)
        if problem.gt_fov is not None:
            snap.fov_err = _metrics.fov_error(block.fov, problem.gt_fov)
    return snap


def optimize(problem: SceneProblem, config: OptimizerConfig,
             params: ParameterBlock | None = None) -> tuple[ParameterBlock, Trace]:
    """Run the fixed-length optimization; returns final params and the trace.

    A non-finite loss or gradient aborts with the trace recorded so far
    attached to the raised exception.
    """
    if params is None:
        params = problem.params
    if params is None:
        raise ValueError("problem has no parameters; call initialize() first")
    workers = config.workers
    if workers is None:
        try:
            workers = max(1, int(os.environ.get("PROBA_NUM_WORKERS", "1")))
        except ValueError:
            workers = 1
    layout = problem.layout
    flat = pack(params)
    lr = config.lr_vector(layout)
    state = AdamState.zeros(layout.length)
    trace = Trace()
    t0 = time.perf_counter()
    for it in range(config.iterations):
        report, grad = loss_and_gradient(problem, flat, problem.config,
                                         workers=workers)
        if not np.isfinite(report.total):
            raise NonFiniteLoss(trace=trace)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(trace=trace)
        if it % config.trace_every == 0:
            trace.snapshots.append(_snapshot(problem, it, report, flat, t0))
        flat = adamw_step(state, flat, grad, lr, config)
    report = total_loss(problem, flat)
    trace.snapshots.append(_snapshot(problem, config.iterations, report, flat, t0))
    return unpack(flat, layout), trace
