"""Objectives: probabilistic reprojection NLL, Bhattacharyya overlap loss,
and the baseline objectives used for comparison.

The probabilistic reprojection term for one correspondence direction is

    1/2 ||q_hat - q||^2_{Sigma^{-1}} + 1/2 log det Sigma,

where q_hat projects the source observation (backprojected to its depth)
into the target camera, and Sigma = (f^2 sigma^2 / Z^2) A is the projected
covariance of the isotropic 3-D Gaussian at the transformed point.  The
same quantity rewritten in object space,

    Z^2/(2 f^2 sigma^2) (q - q_hat)^T A^{-1} (q - q_hat)
        + 2 log(f sigma) + 1/2 log det A - 2 log Z,

is implemented separately (different code path, numpy linalg) so the
equality of the two forms is a runnable oracle; the -2 log Z term is the
built-in depth regularizer that widens the basin of convergence.

The overlap loss sums -BC^2 over correspondences, with BC the
Bhattacharyya coefficient between the two endpoint Gaussians transported
to the world frame.  Total: L = L_reproj + lambda * L_bha.

Transformed points that land at or behind the target camera contribute a
quadratic barrier on (depth_floor - z) instead of the (undefined)
reprojection term, and are counted in ``LossReport.skipped``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteLoss
from .geometry import DEPTH_FLOOR, focal_from_fov, rodrigues
from .problem import ParameterBlock, SceneProblem, pack, unpack

MODES = ("proba", "classical_ba", "pose_baseline", "expose_baseline")

# Directions per gradient chunk; fixed so results do not depend on the
# worker count.
CHUNK_SIZE = 16384


@dataclass
class LossConfig:
    """Objective selection and weights."""

    mode: str = "proba"
    lambda_: float = 1.0          # weight of the overlap loss
    symmetric: bool = True        # use both i->j and j->i directions
    eta: float = 0.05             # blend weight of the pose baseline
    anisotropic: bool = False
    use_confidence: bool = False  # weight residuals by match confidence
    barrier_weight: float = 1e3   # quadratic penalty behind the camera
    printed_bc_normalization: bool = False
    expose_scale: float = 1.0     # saturation depth of the exp baseline

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")


@dataclass
class LossReport:
    """Per-term breakdown of one evaluation.

    ``bha`` is only computed in proba mode with lambda > 0; it reads 0
    otherwise.  ``skipped`` counts residual directions that fell behind
    the target camera and were replaced by the barrier term.
    """

    total: float
    reproj: float
    bha: float = 0.0
    skipped: int = 0
    per_correspondence: np.ndarray | None = None


class _Directions(NamedTuple):
    src: np.ndarray       # (N,) source frame index
    dst: np.ndarray       # (N,) target frame index
    src_px: np.ndarray    # (N, 2) observed pixel in the source frame
    dst_px: np.ndarray    # (N, 2) matched pixel in the target frame
    didx: np.ndarray      # (N,) row in the depth group
    sidx: np.ndarray      # (N,) row in the radius group
    conf: np.ndarray      # (N,)
    pair_src: np.ndarray  # (P,) source frame of each unique ordered pair
    pair_dst: np.ndarray  # (P,)
    pair_idx: np.ndarray  # (N,) which unique pair a direction belongs to


class _CorrEndpoints(NamedTuple):
    fi: np.ndarray
    fj: np.ndarray
    p: np.ndarray
    q: np.ndarray
    dpi: np.ndarray
    dqi: np.ndarray
    conf: np.ndarray


def _directions(problem: SceneProblem, symmetric: bool) -> _Directions:
    key = ("dirs", symmetric)
    if key in problem._cache:
        return problem._cache[key]
    cs = problem.correspondences
    fi = np.array([c.frame_i for c in cs], dtype=np.intp)
    fj = np.array([c.frame_j for c in cs], dtype=np.intp)
    p = np.array([c.p for c in cs])
    q = np.array([c.q for c in cs])
    conf = np.array([c.confidence for c in cs])
    idx = np.arange(len(cs), dtype=np.intp)
    if symmetric:
        src, dst = np.concatenate([fi, fj]), np.concatenate([fj, fi])
        src_px, dst_px = np.concatenate([p, q]), np.concatenate([q, p])
        didx = np.concatenate([2 * idx, 2 * idx + 1])
        conf = np.concatenate([conf, conf])
    else:
        src, dst, src_px, dst_px, didx = fi, fj, p, q, 2 * idx
    # unique ordered frame pairs: relative transforms are built per pair,
    # then gathered per direction
    code = src * problem.n_frames + dst
    pair_codes, pair_idx = np.unique(code, return_inverse=True)
    out = _Directions(src, dst, src_px, dst_px, didx, didx.copy(), conf,
                      pair_codes // problem.n_frames,
                      pair_codes % problem.n_frames,
                      pair_idx.astype(np.intp))
    problem._cache[key] = out
    return out


def _corr_endpoints(problem: SceneProblem) -> _CorrEndpoints:
    if "corr" in problem._cache:
        return problem._cache["corr"]
    cs = problem.correspondences
    idx = np.arange(len(cs), dtype=np.intp)
    out = _CorrEndpoints(np.array([c.frame_i for c in cs], dtype=np.intp),
                         np.array([c.frame_j for c in cs], dtype=np.intp),
                         np.array([c.p for c in cs]),
                         np.array([c.q for c in cs]),
                         2 * idx, 2 * idx + 1,
                         np.array([c.confidence for c in cs]))
    problem._cache["corr"] = out
    return out


def _frame_dims(problem: SceneProblem) -> tuple[np.ndarray, np.ndarray]:
    if "dims" not in problem._cache:
        problem._cache["dims"] = (
            np.array([f.width for f in problem.frames], dtype=np.float64),
            np.array([f.height for f in problem.frames], dtype=np.float64))
    return problem._cache["dims"]


class _Decoded(NamedTuple):
    R: object        # (F, 3, 3)
    t: object        # (F, 3)
    fov: object      # scalar, degrees
    f: object        # (F,) focal lengths
    log_d: object    # (2C,)
    rad: object      # (2C,) or (2C, 6)


def _decode(problem: SceneProblem, theta) -> _Decoded:
    lay = problem.layout
    Wv, _ = _frame_dims(problem)
    poses = ad.reshape(theta[lay.pose], (lay.n_frames, 6))
    R = rodrigues(poses[:, 0:3])
    t = poses[:, 3:6]
    fov = theta[lay.fov][0]
    f = focal_from_fov(fov, Wv) if isinstance(theta, ad.Tensor) \
        else focal_from_fov(float(fov), 1.0) * Wv
    log_d = theta[lay.depth]
    rad = theta[lay.radius]
    if lay.anisotropic:
        rad = ad.reshape(rad, (2 * lay.n_corr, 6))
    return _Decoded(R, t, fov, f, log_d, rad)


def _matvec(M, v):
    vshape = ad.value(v).shape
    out = ad.matmul(M, ad.reshape(v, vshape + (1,)))
    oshape = ad.value(out).shape
    return ad.reshape(out, oshape[:-2] + (oshape[-2],))


def _relative_transforms(dec: _Decoded, d: _Directions):
    """Per-unique-pair relative rotation and translation (src cam -> dst cam)."""
    Rs = ad.take(dec.R, d.pair_src)
    Rd = ad.take(dec.R, d.pair_dst)
    Rrel = ad.matmul(Rd, ad.swapaxes(Rs, -1, -2))
    trel = ad.take(dec.t, d.pair_dst) - _matvec(Rrel, ad.take(dec.t, d.pair_src))
    return Rrel, trel


def _backprojected(problem, dec, d: _Directions, sl: slice):
    Wv, Hv = _frame_dims(problem)
    src = d.src[sl]
    fs = ad.take(dec.f, src)
    depth = ad.exp(ad.take(dec.log_d, d.didx[sl]))
    s = depth / fs
    x1 = (d.src_px[sl, 0] - Wv[src] / 2.0) * s
    x2 = (d.src_px[sl, 1] - Hv[src] / 2.0) * s
    return ad.stack([x1, x2, depth], axis=-1)


def _direction_terms(problem, dec: _Decoded, cfg: LossConfig, sl: slice):
    """Per-direction loss terms for the configured mode; returns (terms, skipped)."""
    Wv, Hv = _frame_dims(problem)
    d = _directions(problem, cfg.symmetric)
    dst = d.dst[sl]
    x = _backprojected(problem, dec, d, sl)
    Rrel_p, trel_p = _relative_transforms(dec, d)
    Rrel = ad.take(Rrel_p, d.pair_idx[sl])
    y = _matvec(Rrel, x) + ad.take(trel_p, d.pair_idx[sl])
    X, Y, Z = y[..., 0], y[..., 1], y[..., 2]
    fd = ad.take(dec.f, dst)
    mx, my = d.dst_px[sl, 0], d.dst_px[sl, 1]

    if cfg.mode == "pose_baseline":
        # pseudo object space error: no division by depth anywhere
        cx, cy = Wv[dst] / 2.0, Hv[dst] / 2.0
        px = fd * X + cx * Z
        py = fd * Y + cy * Z
        ose = (px - mx * Z) ** 2 + (py - my * Z) ** 2
        aff = (px - mx) ** 2 + (py - my) ** 2
        terms = 0.5 * ((1.0 - cfg.eta) * ose + cfg.eta * aff)
        if cfg.use_confidence:
            terms = terms * d.conf[sl]
        return terms, 0

    valid = ad.value(Z) > DEPTH_FLOOR
    skipped = int(np.count_nonzero(~valid))
    Zs = ad.where(valid, Z, 1.0)
    iZ = 1.0 / Zs
    xn = X * iZ
    yn = Y * iZ
    e1 = fd * xn + Wv[dst] / 2.0 - mx
    e2 = fd * yn + Hv[dst] / 2.0 - my
    barrier = cfg.barrier_weight * (DEPTH_FLOOR - Z) ** 2

    if cfg.mode == "classical_ba":
        body = 0.5 * (e1 * e1 + e2 * e2)
    elif cfg.mode == "expose_baseline":
        # saturating object-space residual: ~ Z * pixel error for small Z,
        # bounded (gradient -> 0 in depth) for large Z
        s = cfg.expose_scale
        r = s * (1.0 - ad.exp(-Zs / s))
        body = 0.5 * r * r * (e1 * e1 + e2 * e2)
    elif cfg.anisotropic:
        arot = d.sidx[sl]
        rows = ad.take(dec.rad, arot)
        RA = rodrigues(rows[:, 0:3])
        ev = ad.exp(2.0 * rows[:, 3:6])
        n = ad.value(ev).shape[0]
        Sb = ad.matmul(RA * ad.reshape(ev, (n, 1, 3)), ad.swapaxes(RA, -1, -2))
        Scam = ad.matmul(ad.matmul(Rrel, Sb), ad.swapaxes(Rrel, -1, -2))
        zero = np.zeros(n)
        J = ad.reshape(ad.stack([fd / Zs, zero, -fd * X / (Zs * Zs),
                                 zero, fd / Zs, -fd * Y / (Zs * Zs)], axis=-1),
                       (n, 2, 3))
        Sp = ad.matmul(ad.matmul(J, Scam), ad.swapaxes(J, -1, -2))
        S11, S12, S22 = Sp[:, 0, 0], Sp[:, 0, 1], Sp[:, 1, 1]
        det = S11 * S22 - S12 * S12
        quad = (S22 * e1 * e1 - 2.0 * S12 * e1 * e2 + S11 * e2 * e2) / det
        body = 0.5 * quad + 0.5 * ad.log(det)
    else:
        sigma = ad.exp(ad.take(dec.rad, d.sidx[sl]))
        A11 = 1.0 + xn * xn
        A12 = xn * yn
        A22 = 1.0 + yn * yn
        detA = A11 + yn * yn  # = A11 A22 - A12^2 for this A
        scale = (fd * sigma * iZ) ** 2
        quad = (A22 * e1 * e1 - 2.0 * A12 * e1 * e2 + A11 * e2 * e2) / (detA * scale)
        body = 0.5 * quad + ad.log(scale) + 0.5 * ad.log(detA)
    terms = ad.where(valid, body, barrier)
    if cfg.use_confidence:
        terms = terms * d.conf[sl]
    return terms, skipped


def _world_means(problem, dec: _Decoded, frames, px, didx, sl: slice):
    Wv, Hv = _frame_dims(problem)
    fr = frames[sl]
    fs = ad.take(dec.f, fr)
    depth = ad.exp(ad.take(dec.log_d, didx[sl]))
    s = depth / fs
    x1 = (px[sl, 0] - Wv[fr] / 2.0) * s
    x2 = (px[sl, 1] - Hv[fr] / 2.0) * s
    x = ad.stack([x1, x2, depth], axis=-1)
    R = ad.take(dec.R, fr)
    t = ad.take(dec.t, fr)
    return _matvec(ad.swapaxes(R, -1, -2), x - t), R


def _bc_terms(problem, dec: _Decoded, cfg: LossConfig, sl: slice):
    """Per-correspondence -BC^2 between the two world-frame endpoint Gaussians."""
    c = _corr_endpoints(problem)
    mu1, R1 = _world_means(problem, dec, c.fi, c.p, c.dpi, sl)
    mu2, R2 = _world_means(problem, dec, c.fj, c.q, c.dqi, sl)
    diff = mu1 - mu2
    dist2 = ad.sum(diff * diff, axis=-1)

    if cfg.anisotropic:
        S1 = _world_cov(dec, c.dpi[sl], R1)
        S2 = _world_cov(dec, c.dqi[sl], R2)
        M = S1 + S2
        m11, m12, m13 = M[:, 0, 0], M[:, 0, 1], M[:, 0, 2]
        m22, m23, m33 = M[:, 1, 1], M[:, 1, 2], M[:, 2, 2]
        detM = (m11 * (m22 * m33 - m23 * m23)
                - m12 * (m12 * m33 - m23 * m13)
                + m13 * (m12 * m23 - m22 * m13))
        d1, d2, d3 = diff[:, 0], diff[:, 1], diff[:, 2]
        # quad = diff^T adj(M) diff / det(M), with M symmetric
        quad_num = (d1 * d1 * (m22 * m33 - m23 * m23)
                    + d2 * d2 * (m11 * m33 - m13 * m13)
                    + d3 * d3 * (m11 * m22 - m12 * m12)
                    + 2.0 * d1 * d2 * (m13 * m23 - m12 * m33)
                    + 2.0 * d1 * d3 * (m12 * m23 - m13 * m22)
                    + 2.0 * d2 * d3 * (m12 * m13 - m11 * m23))
        quad = 0.25 * quad_num / detM
        # log det of a rotated diagonal covariance = 2 * sum(log sigmas)
        ld1 = 2.0 * ad.sum(ad.take(dec.rad, c.dpi[sl])[:, 3:6], axis=-1)
        ld2 = 2.0 * ad.sum(ad.take(dec.rad, c.dqi[sl])[:, 3:6], axis=-1)
        if cfg.printed_bc_normalization:
            logterm = 0.5 * (ad.log(detM) - np.log(2.0) - 0.5 * (ld1 + ld2))
        else:
            logterm = 0.5 * (ad.log(detM) - 3.0 * np.log(2.0) - 0.5 * (ld1 + ld2))
    else:
        s1 = ad.exp(2.0 * ad.take(dec.rad, c.dpi[sl]))
        s2 = ad.exp(2.0 * ad.take(dec.rad, c.dqi[sl]))
        tot = s1 + s2
        quad = 0.25 * dist2 / tot
        if cfg.printed_bc_normalization:
            logterm = 0.5 * (3.0 * ad.log(tot) - np.log(2.0)
                             - 1.5 * (ad.log(s1) + ad.log(s2)))
        else:
            logterm = 1.5 * ad.log(tot / (2.0 * ad.sqrt(s1 * s2)))
    bc = ad.exp(-quad - logterm)
    terms = -(bc * bc)
    if cfg.use_confidence:
        terms = terms * c.conf[sl]
    return terms


def _world_cov(dec: _Decoded, rows, Rcam):
    """World-frame covariance of an anisotropic endpoint: R^T Sigma_body R."""
    r = ad.take(dec.rad, rows)
    RA = rodrigues(r[:, 0:3])
    ev = ad.exp(2.0 * r[:, 3:6])
    n = ad.value(ev).shape[0]
    Sb = ad.matmul(RA * ad.reshape(ev, (n, 1, 3)), ad.swapaxes(RA, -1, -2))
    Rt = ad.swapaxes(Rcam, -1, -2)
    return ad.matmul(ad.matmul(Rt, Sb), Rcam)


# -- public evaluation ------------------------------------------------------


def _as_flat(params) -> np.ndarray:
    if isinstance(params, ParameterBlock):
        return pack(params)
    return np.asarray(params, dtype=np.float64)


def _check_finite(x: float, what: str) -> float:
    if not np.isfinite(x):
        raise NonFiniteLoss(f"{what} is not finite")
    return x


def _n_directions(problem: SceneProblem, cfg: LossConfig) -> int:
    return 2 * problem.n_corr if cfg.symmetric else problem.n_corr


def reproj_nll(problem: SceneProblem, params, config: LossConfig | None = None,
               per_term: bool = False) -> LossReport:
    """Probabilistic reprojection loss (Mahalanobis + log-det terms)."""
    cfg = config or problem.config
    dec = _decode(problem, _as_flat(params))
    terms, skipped = _direction_terms(problem, dec, cfg, slice(0, _n_directions(problem, cfg)))
    total = _check_finite(float(np.sum(terms)), "reprojection loss")
    per = _fold_directions(problem, terms, cfg) if per_term else None
    return LossReport(total=total, reproj=total, skipped=skipped,
                      per_correspondence=per)


def _fold_directions(problem, terms, cfg) -> np.ndarray:
    c = problem.n_corr
    return terms[:c] + terms[c:] if cfg.symmetric else np.asarray(terms).copy()


def reproj_object_space(problem: SceneProblem, params,
                        config: LossConfig | None = None) -> float:
    """Object-space form of the reprojection loss (independent evaluation).

    Assembles the propagation matrix explicitly and goes through
    numpy.linalg, so agreement with ``reproj_nll`` checks the algebraic
    identity between the two forms rather than one code path twice.
    """
    cfg = config or problem.config
    if cfg.anisotropic:
        raise ValueError("the object-space form is defined for isotropic radii")
    block = params if isinstance(params, ParameterBlock) else \
        unpack(_as_flat(params), problem.layout)
    Wv, Hv = _frame_dims(problem)
    d = _directions(problem, cfg.symmetric)
    R = np.asarray(rodrigues(block.poses[:, 0:3]))
    t = block.poses[:, 3:6]
    f = focal_from_fov(block.fov, 1.0) * Wv
    depth = np.exp(block.log_depths[d.didx])
    sigma = np.exp(block.radii[d.sidx])
    fs, fd = f[d.src], f[d.dst]
    x = np.stack([(d.src_px[:, 0] - Wv[d.src] / 2.0) * depth / fs,
                  (d.src_px[:, 1] - Hv[d.src] / 2.0) * depth / fs,
                  depth], axis=-1)
    w = np.einsum("nij,nj->ni", R[d.src].transpose(0, 2, 1), x - t[d.src])
    y = np.einsum("nij,nj->ni", R[d.dst], w) + t[d.dst]
    Z = y[:, 2]
    valid = Z > DEPTH_FLOOR
    Zs = np.where(valid, Z, 1.0)
    q_hat = np.stack([fd * y[:, 0] / Zs + Wv[d.dst] / 2.0,
                      fd * y[:, 1] / Zs + Hv[d.dst] / 2.0], axis=-1)
    e = q_hat - d.dst_px
    A = np.empty((len(Z), 2, 2))
    A[:, 0, 0] = 1.0 + (y[:, 0] / Zs) ** 2
    A[:, 0, 1] = A[:, 1, 0] = y[:, 0] * y[:, 1] / Zs**2
    A[:, 1, 1] = 1.0 + (y[:, 1] / Zs) ** 2
    quad = np.einsum("ni,nij,nj->n", e, np.linalg.inv(A), e)
    _, logdetA = np.linalg.slogdet(A)
    body = (Zs**2 / (2.0 * fd**2 * sigma**2) * quad
            + 2.0 * np.log(fd * sigma) + 0.5 * logdetA - 2.0 * np.log(Zs))
    barrier = cfg.barrier_weight * (DEPTH_FLOOR - Z) ** 2
    terms = np.where(valid, body, barrier)
    if cfg.use_confidence:
        terms = terms * d.conf
    return _check_finite(float(np.sum(terms)), "object-space loss")


def bha_loss(problem: SceneProblem, params,
             config: LossConfig | None = None) -> float:
    """Sum of -BC^2 over correspondences; lies in [-C, 0)."""
    cfg = config or problem.config
    dec = _decode(problem, _as_flat(params))
    terms = _bc_terms(problem, dec, cfg, slice(0, problem.n_corr))
    return _check_finite(float(np.sum(terms)), "overlap loss")


def classical_ba_loss(problem: SceneProblem, params,
                      config: LossConfig | None = None) -> float:
    """Plain 1/2 ||q_hat - q||^2 summed over directions."""
    cfg = _with_mode(config or problem.config, "classical_ba")
    dec = _decode(problem, _as_flat(params))
    terms, _ = _direction_terms(problem, dec, cfg, slice(0, _n_directions(problem, cfg)))
    return _check_finite(float(np.sum(terms)), "classical BA loss")


def pose_baseline_loss(problem: SceneProblem, params,
                       eta: float | None = None,
                       config: LossConfig | None = None) -> float:
    """Blended object-space / affine-projection baseline."""
    cfg = _with_mode(config or problem.config, "pose_baseline")
    if eta is not None:
        cfg = _replace(cfg, eta=eta)
    dec = _decode(problem, _as_flat(params))
    terms, _ = _direction_terms(problem, dec, cfg, slice(0, _n_directions(problem, cfg)))
    return _check_finite(float(np.sum(terms)), "pose baseline loss")


def expose_baseline_loss(problem: SceneProblem, params,
                         config: LossConfig | None = None) -> float:
    """Depth-saturated object-space baseline with an exponential penalty."""
    cfg = _with_mode(config or problem.config, "expose_baseline")
    dec = _decode(problem, _as_flat(params))
    terms, _ = _direction_terms(problem, dec, cfg, slice(0, _n_directions(problem, cfg)))
    return _check_finite(float(np.sum(terms)), "exp baseline loss")


def _replace(cfg: LossConfig, **kw) -> LossConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _with_mode(cfg: LossConfig, mode: str) -> LossConfig:
    return cfg if cfg.mode == mode else _replace(cfg, mode=mode)


def total_loss(problem: SceneProblem, params, config: LossConfig | None = None,
               per_term: bool = False) -> LossReport:
    """Mode-dispatched objective; proba mode returns reproj + lambda * bha."""
    cfg = config or problem.config
    flat = _as_flat(params)
    dec = _decode(problem, flat)
    terms, skipped = _direction_terms(problem, dec, cfg, slice(0, _n_directions(problem, cfg)))
    reproj = float(np.sum(terms))
    per = _fold_directions(problem, np.asarray(terms), cfg) if per_term else None
    if cfg.mode == "proba" and cfg.lambda_ > 0:
        bc = np.asarray(_bc_terms(problem, dec, cfg, slice(0, problem.n_corr)))
        bha = float(np.sum(bc))
        if per is not None:
            per = per + cfg.lambda_ * bc
    else:
        bha = 0.0
    total = reproj + cfg.lambda_ * bha if cfg.mode == "proba" else reproj
    _check_finite(total, "total loss")
    return LossReport(total=total, reproj=reproj, bha=bha, skipped=skipped,
                      per_correspondence=per)


# -- gradient evaluation -----------------------------------------------------


def env_workers() -> int:
    try:
        return max(1, int(os.environ.get("PROBA_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def _chunks(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def loss_and_gradient(problem: SceneProblem, flat: np.ndarray,
                      config: LossConfig | None = None,
                      workers: int | None = None) -> tuple[LossReport, np.ndarray]:
    """Objective value and exact gradient w.r.t. the packed vector.

    Large problems are split into fixed-size chunks of residual terms
    reduced in a fixed order, so results are bit-identical for any
    worker count; the common small case runs as one graph.
    """
    cfg = config or problem.config
    flat = np.asarray(flat, dtype=np.float64)
    if workers is None:
        workers = env_workers()
    n_dir = _n_directions(problem, cfg)
    want_bc = cfg.mode == "proba" and cfg.lambda_ > 0

    if n_dir <= CHUNK_SIZE and problem.n_corr <= CHUNK_SIZE:
        # single combined graph: one decode, one backward pass
        leaf = ad.Tensor(flat)
        dec = _decode(problem, leaf)
        terms, skipped = _direction_terms(problem, dec, cfg, slice(0, n_dir))
        reproj_t = ad.sum(terms)
        if want_bc:
            bha_t = ad.sum(_bc_terms(problem, dec, cfg, slice(0, problem.n_corr)))
            total_t = reproj_t + cfg.lambda_ * bha_t
            bha = float(bha_t.value)
        else:
            total_t = reproj_t
            bha = 0.0
        total_t.backward()
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(flat)
        reproj = float(reproj_t.value)
        total = reproj + cfg.lambda_ * bha if cfg.mode == "proba" else reproj
        return LossReport(total=total, reproj=reproj, bha=bha, skipped=skipped), grad

    tasks = [("dir", sl) for sl in _chunks(n_dir, CHUNK_SIZE)]
    if want_bc:
        tasks += [("bc", sl) for sl in _chunks(problem.n_corr, CHUNK_SIZE)]

    def run(task):
        kind, sl = task
        leaf = ad.Tensor(flat)
        dec = _decode(problem, leaf)
        if kind == "dir":
            terms, skipped = _direction_terms(problem, dec, cfg, sl)
        else:
            terms, skipped = _bc_terms(problem, dec, cfg, sl), 0
        total = ad.sum(terms)
        total.backward()
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(flat)
        return kind, float(total.value), skipped, grad

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    reproj = bha = 0.0
    skipped = 0
    g_dir = np.zeros_like(flat)
    g_bc = np.zeros_like(flat)
    for kind, val, sk, grad in results:
        if kind == "dir":
            reproj += val
            skipped += sk
            g_dir += grad
        else:
            bha += val
            g_bc += grad
    if cfg.mode == "proba":
        total = reproj + cfg.lambda_ * bha
        grad = g_dir + cfg.lambda_ * g_bc
    else:
        total = reproj
        grad = g_dir
    return LossReport(total=total, reproj=reproj, bha=bha, skipped=skipped), grad
