"""Command-line interface.

Subcommands: ``synth`` (generate a synthetic scene), ``ingest`` (thin a
dense match file into a scene), ``optimize`` (run the optimization and
write trace CSV + convergence SVG + result JSON per seed), ``eval``
(metrics of saved parameters against scene ground truth),
``sweep-lambda`` / ``sweep-frames`` (studies with CSV + SVG output), and
``plot`` (re-render a trace CSV as an SVG chart).

Exit codes: 0 success, 1 validation error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .errors import NonFiniteGradient, NonFiniteLoss, ProbaError
from .losses import LossConfig, total_loss
from .metrics import summarize
from .optimizer import optimize
from .problem import initialize
from .sceneio import (RunConfig, export_trace, load_dense, load_params,
                      load_run_config, load_scene, read_trace_csv,
                      sample_correspondences, save_params, save_scene,
                      scene_from_dict, select_eval_frames, subset_scene)
from .synthgen import SynthConfig, generate

MODE_ALIASES = {"proba": "proba", "ba": "classical_ba",
                "pose": "pose_baseline", "expose": "expose_baseline"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse usage errors to exit code 1
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    top = _Parser(prog="proba", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic scene")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fov", type=float, default=60.0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--rig", choices=["orbit", "forward_walk"], default="orbit")
    p.add_argument("--baseline", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise std")
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--outlier-radius", type=float, default=50.0)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("ingest", help="thin a dense match file into a scene")
    p.add_argument("--dense", required=True, help="JSON-lines match file")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--conf-floor", type=float, default=0.01)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("optimize", help="run the optimization")
    _add_run_flags(p)
    p.add_argument("--config", help="run-config JSON (flags override it)")

    p = sub.add_parser("eval", help="metrics of saved parameters vs ground truth")
    p.add_argument("--scene", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("-o", "--out", help="write the summary JSON here instead of stdout")

    p = sub.add_parser("sweep-lambda", help="grid over the overlap-loss weight")
    _add_run_flags(p, mode_default="proba")
    p.add_argument("--values", default="0,0.1,1,10",
                   help="comma-separated lambda values")

    p = sub.add_parser("sweep-frames", help="frame-count study on a 10-frame scene")
    _add_run_flags(p)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=10)

    p = sub.add_parser("plot", help="render a trace CSV as an SVG chart")
    p.add_argument("--trace", required=True)
    p.add_argument("--columns", default="total,maa10,fov_err")
    p.add_argument("-o", "--out", required=True)
    return top


def _add_run_flags(p: argparse.ArgumentParser, mode_default: str = "proba"):
    # optimization flags default to None so that explicitly-passed values
    # override a --config file while unspecified ones defer to it
    p.add_argument("--scene", help="scene JSON file")
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--trace-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="single seed (overrides --seeds)")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--anisotropic", action="store_true")
    p.add_argument("--no-symmetric", action="store_true",
                   help="use only the i->j residual direction")
    p.add_argument("--confidence-weighting", action="store_true")
    p.add_argument("--lr-fov-depth", type=float, default=None)
    p.add_argument("--lr-pose-radius", type=float, default=None)
    p.add_argument("--timing", action="store_true",
                   help="export measured wall-clock times (non-reproducible)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(mode_default=mode_default)


def _run_config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        rc = load_run_config(args.config)
    else:
        if not args.scene:
            raise _UsageError("--scene is required (or provide --config)")
        rc = RunConfig(scene=args.scene, out=args.out,
                       mode=MODE_ALIASES[args.mode_default])
    if args.scene:
        rc.scene = args.scene
    rc.out = args.out
    if args.mode is not None:
        rc.mode = MODE_ALIASES[args.mode]
    if args.lambda_ is not None:
        rc.lambda_ = args.lambda_
    if args.eta is not None:
        rc.eta = args.eta
    if args.no_symmetric:
        rc.symmetric = False
    if args.anisotropic:
        rc.anisotropic = True
    if args.confidence_weighting:
        rc.use_confidence = True
    if args.seed is not None:
        rc.seeds = [args.seed]
    elif args.seeds is not None:
        rc.seeds = [int(s) for s in str(args.seeds).split(",") if s != ""]
    opt_kw = {}
    for flag, field in (("iters", "iterations"), ("trace_every", "trace_every"),
                        ("lr_fov_depth", "lr_fov_depth"),
                        ("lr_pose_radius", "lr_pose_radius")):
        value = getattr(args, flag)
        if value is not None:
            opt_kw[field] = value
    if opt_kw:
        rc.optimizer = replace(rc.optimizer, **opt_kw)
    return rc


def _run_one(problem, rc: RunConfig, seed: int, out_dir: str,
             tag: str = "", timing: bool = False) -> dict:
    """Optimize one seed; writes trace CSV + SVG + params + result JSON."""
    problem.params = initialize(problem, seed)
    opt_cfg = replace(rc.optimizer, seed=seed)
    params, trace = optimize(problem, opt_cfg)
    suffix = f"{tag}_seed{seed}" if tag else f"seed{seed}"
    export_trace(trace, os.path.join(out_dir, f"trace_{suffix}.csv"),
                 svg_path=os.path.join(out_dir, f"trace_{suffix}.svg"),
                 include_timing=timing)
    save_params(params, os.path.join(out_dir, f"params_{suffix}.json"),
                meta={"mode": rc.mode, "lambda": rc.lambda_, "eta": rc.eta,
                      "seed": seed, "iterations": opt_cfg.iterations})
    report = total_loss(problem, params)
    result = {"mode": rc.mode, "lambda": rc.lambda_, "eta": rc.eta, "seed": seed,
              "iterations": opt_cfg.iterations, "fov": params.fov,
              "skipped": report.skipped,
              "final": {"total": report.total, "reproj": report.reproj,
                        "bha": report.bha},
              "metrics": None}
    if problem.has_ground_truth():
        summary = summarize(params.pose_list(), problem.gt_poses(),
                            params.fov, problem.gt_fov)
        result["metrics"] = summary.as_dict()
    with open(os.path.join(out_dir, f"result_{suffix}.json"), "w") as fh:
        json.dump(result, fh, indent=1)
        fh.write("\n")
    return result


def _cmd_synth(args) -> int:
    cfg = SynthConfig(n_frames=args.frames, n_points=args.points,
                      fov_gt=args.fov, width=args.width, height=args.height,
                      rig=args.rig, baseline=args.baseline,
                      pixel_noise_std=args.noise, outlier_rate=args.outlier_rate,
                      outlier_radius=args.outlier_radius, seed=args.seed)
    problem, _ = generate(cfg)
    save_scene(problem, args.out,
               meta={"generator": "synth", "seed": args.seed, "units": "scene",
                     "rig": args.rig, "noise": args.noise,
                     "outlier_rate": args.outlier_rate})
    print(f"wrote {args.out}: {problem.n_frames} frames, "
          f"{problem.n_corr} correspondences")
    return 0


def _cmd_ingest(args) -> int:
    records = load_dense(args.dense)
    corrs = sample_correspondences(records, stride=args.stride,
                                   conf_floor=args.conf_floor)
    ids = sorted({c.frame_i for c in corrs} | {c.frame_j for c in corrs})
    remap = {old: new for new, old in enumerate(ids)}
    doc = {"frames": [{"id": remap[i], "width": args.width, "height": args.height}
                      for i in ids],
           "correspondences": [{"i": remap[c.frame_i], "j": remap[c.frame_j],
                                "px": float(c.p[0]), "py": float(c.p[1]),
                                "qx": float(c.q[0]), "qy": float(c.q[1]),
                                "conf": c.confidence} for c in corrs],
           "meta": {"generator": "ingest", "source": args.dense,
                    "stride": args.stride, "conf_floor": args.conf_floor}}
    scene_from_dict(doc, LossConfig())  # validate before writing
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {args.out}: {len(ids)} frames, {len(corrs)} correspondences")
    return 0


def _cmd_optimize(args) -> int:
    rc = _run_config_from_args(args)
    os.makedirs(rc.out, exist_ok=True)
    problem = load_scene(rc.scene, rc.loss_config())
    for seed in rc.seeds:
        result = _run_one(problem, rc, seed, rc.out, timing=args.timing)
        m = result["metrics"]
        extra = f" maa10={m['maa10']:.1f} fov_err={m['fov_error']:.2f}" if m else ""
        print(f"seed {seed}: total={result['final']['total']:.4f}{extra}")
    return 0


def _cmd_eval(args) -> int:
    problem = load_scene(args.scene, LossConfig())
    poses, fov = load_params(args.params)
    summary = summarize(poses, problem.gt_poses(), fov, problem.gt_fov)
    text = json.dumps(summary.as_dict(), indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _sweep_rows_to_csv(path: str, header: list[str], rows: list[list]):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, int) else repr(float(v))
                              for v in row) + "\n")


def _cmd_sweep_lambda(args) -> int:
    rc = _run_config_from_args(args)
    values = [float(v) for v in args.values.split(",") if v != ""]
    os.makedirs(rc.out, exist_ok=True)
    header = ["lambda", "seed", "maa5", "maa10", "maa15", "fov_err", "total"]
    rows = []
    means = {"maa10": [], "fov_err": []}
    for lam in values:
        rc_l = replace(rc, lambda_=lam)
        problem = load_scene(rc.scene, rc_l.loss_config())
        per_seed = []
        for seed in rc.seeds:
            res = _run_one(problem, rc_l, seed, rc.out,
                           tag=f"lambda{lam:g}", timing=args.timing)
            m = res["metrics"] or {}
            rows.append([lam, seed, m.get("maa5", float("nan")),
                         m.get("maa10", float("nan")), m.get("maa15", float("nan")),
                         m.get("fov_error", float("nan")), res["final"]["total"]])
            per_seed.append(rows[-1])
        means["maa10"].append(float(np.mean([r[3] for r in per_seed])))
        means["fov_err"].append(float(np.mean([r[5] for r in per_seed])))
    _sweep_rows_to_csv(os.path.join(rc.out, "sweep_lambda.csv"), header, rows)
    from .plotting import sweep_chart
    sweep_chart(values, means, os.path.join(rc.out, "sweep_lambda.svg"),
                xlabel="lambda", title="overlap-weight sweep", logx=True)
    print(f"wrote {os.path.join(rc.out, 'sweep_lambda.csv')} ({len(rows)} rows)")
    return 0


def _cmd_sweep_frames(args) -> int:
    rc = _run_config_from_args(args)
    if not 2 <= args.n_min <= args.n_max <= 10:
        raise _UsageError("need 2 <= n-min <= n-max <= 10")
    os.makedirs(rc.out, exist_ok=True)
    with open(rc.scene) as fh:
        doc = json.load(fh)
    if len(doc.get("frames", [])) < 10:
        raise _UsageError("sweep-frames needs a scene with at least 10 frames")
    header = ["n", "seed", "maa5", "maa10", "maa15", "fov_err", "total"]
    rows = []
    series = {"maa10": [], "fov_err": []}
    ns = list(range(args.n_min, args.n_max + 1))
    for n in ns:
        sub = subset_scene(doc, select_eval_frames(n))
        problem = scene_from_dict(sub, rc.loss_config())
        per_seed = []
        for seed in rc.seeds:
            res = _run_one(problem, rc, seed, rc.out, tag=f"n{n}",
                           timing=args.timing)
            m = res["metrics"] or {}
            rows.append([n, seed, m.get("maa5", float("nan")),
                         m.get("maa10", float("nan")), m.get("maa15", float("nan")),
                         m.get("fov_error", float("nan")), res["final"]["total"]])
            per_seed.append(rows[-1])
        series["maa10"].append(float(np.mean([r[3] for r in per_seed])))
        series["fov_err"].append(float(np.mean([r[5] for r in per_seed])))
    _sweep_rows_to_csv(os.path.join(rc.out, "sweep_frames.csv"), header, rows)
    from .plotting import sweep_chart
    sweep_chart(ns, series, os.path.join(rc.out, "sweep_frames.svg"),
                xlabel="frames", title="frame-count study")
    print(f"wrote {os.path.join(rc.out, 'sweep_frames.csv')} ({len(rows)} rows)")
    return 0


def _cmd_plot(args) -> int:
    rows = read_trace_csv(args.trace)
    columns = [c for c in args.columns.split(",") if c]
    from .plotting import trace_chart
    trace_chart(rows, columns, args.out)
    print(f"wrote {args.out}")
    return 0


_HANDLERS = {"synth": _cmd_synth, "ingest": _cmd_ingest,
             "optimize": _cmd_optimize, "eval": _cmd_eval,
             "sweep-lambda": _cmd_sweep_lambda, "sweep-frames": _cmd_sweep_frames,
             "plot": _cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except (NonFiniteLoss, NonFiniteGradient) as exc:
        print(f"error: numerical abort: {exc}", file=sys.stderr)
        return 2
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProbaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
