"""Probabilistic, initialization-free bundle adjustment.

Landmarks are modeled as 3-D Gaussians; the objective combines an
uncertainty-aware reprojection negative log-likelihood with a
Bhattacharyya-overlap consistency loss, optimized jointly over camera
poses, per-observation depths, Gaussian radii, and the field of view
from identity poses and random depths.
"""

from .errors import (DegenerateScene, DimensionMismatch, EmptyAfterSampling,
                     LengthMismatch, MissingGroundTruth, NonFiniteGradient,
                     NonFiniteLoss, NonPositiveDepth, NonPositiveRadius,
                     OutOfRange, ProbaError, SceneFormatError, SingularCovariance)
from .geometry import (DEPTH_FLOOR, Intrinsics, Pose, apply, backproject,
                       compose, inverse, project, projected_covariance,
                       propagation_matrix_A, rotation_matrix, rotation_vector)
from .losses import (LossConfig, LossReport, bha_loss, classical_ba_loss,
                     expose_baseline_loss, loss_and_gradient,
                     pose_baseline_loss, reproj_nll, reproj_object_space,
                     total_loss)
from .metrics import (MetricSummary, PairError, accuracy_at, fov_error,
                      relative_pose_errors, summarize)
from .optimizer import (AdamState, OptimizerConfig, Trace, TraceSnapshot,
                        adamw_step, gradient, optimize)
from .problem import (Correspondence, Frame, ParameterBlock, ParamLayout,
                      SceneProblem, initialize, pack, unpack)
from .synthgen import SynthConfig, generate, perturb_gt
from .uncertainty import (AnisotropicRadius, Gaussian2, Gaussian3,
                          bhattacharyya_coefficient, realize_covariance,
                          world_gaussian)

__version__ = "0.1.0"
