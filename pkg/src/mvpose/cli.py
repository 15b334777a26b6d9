"""Command-line entry point: ``mvpose <command> [flags]``.

Exit status: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import formats, harness
from .errors import MvposeError, NumericalError
from .geometry import Pose, geodesic_angle, save_obj, so3_exp
from .losses import LossWeights, multiview_loss, multiview_loss_gradient
from .metrics import add, add_s, grasp_correct
from .refine import RefineConfig, estimate_pose, initial_translation
from .render import SoftParams, render_hard_mask, render_silhouette

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class UsageError(MvposeError, ValueError):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError("must be finite and >= 0")
    return v


def _positive_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _vec3(text):
    parts = text.split(",")
    try:
        v = [float(p) for p in parts]
    except ValueError:
        v = []
    if len(v) != 3 or not all(math.isfinite(x) for x in v):
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return tuple(v)


def parse_range(text: str) -> list[int]:
    """``"a:b"`` inclusive, or a single integer."""
    try:
        if ":" in text:
            a, b = (int(p) for p in text.split(":"))
        else:
            a = b = int(text)
    except ValueError:
        raise UsageError(f"invalid range {text!r}; expected a:b") from None
    if a < 1 or b < a:
        raise UsageError(f"invalid range {text!r}; need 1 <= a <= b")
    return list(range(a, b + 1))


def _soft_flags(p, sigma_default=SoftParams.sigma):
    p.add_argument("--sigma", type=_positive_float, default=sigma_default, help="soft-edge width in px^2 (default %(default)s)")


def _weight_flags(p):
    p.add_argument("--lambda1", type=_nonneg_float, default=LossWeights.lambda1, help="IoU weight (default %(default)s)")
    p.add_argument("--lambda2", type=_nonneg_float, default=LossWeights.lambda2, help="chamfer weight (default %(default)s)")


def _threads_flag(p):
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1, help="worker threads for per-view terms (default: all cores)")


def _optim_flags(p):
    p.add_argument("--iters", type=int, default=RefineConfig.max_iters, help="maximum gradient iterations (default %(default)s)")
    p.add_argument("--patience", type=_positive_int, default=RefineConfig.patience, help="stop after this many iterations without improvement (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed (default %(default)s)")


def _scene_flags(p, shape_default="cube"):
    p.add_argument("--shape", default=shape_default, help="builtin shape name or OBJ path (default %(default)s)")
    p.add_argument("--size", type=_positive_int, default=128, help="image width and height in px (default %(default)s)")
    p.add_argument("--distance", type=_positive_float, default=5.0, help="camera distance (default %(default)s)")
    p.add_argument("--baseline", type=_nonneg_float, default=45.0, help="minimum angle between cameras in degrees (default %(default)s)")


def _perturb_flags(p):
    d = harness.Perturbation()
    p.add_argument("--rot-deg", type=_nonneg_float, default=d.rot_deg, help="initial rotation error in degrees (default %(default)s)")
    p.add_argument("--trans-frac", type=_nonneg_float, default=d.trans_frac, help="initial translation error as a fraction of camera distance (default %(default)s)")
    p.add_argument("--scale-frac", type=_nonneg_float, default=d.scale_frac, help="initial log-scale error bound per axis (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvpose", description="Multi-view silhouette pose refinement.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("refine", help="estimate the pose of a scene's mesh")
    p.add_argument("--scene", required=True, help="scene manifest (JSON)")
    p.add_argument("--out", required=True, help="output pose file (JSON)")
    p.add_argument("--init", help="coarse pose file; without it the Euler-bin search runs first")
    p.add_argument("--t0", type=_vec3, help="bin-search translation x,y,z (default: triangulated mask centroids)")
    p.add_argument("--s0", type=_vec3, default=(1.0, 1.0, 1.0), help="bin-search scale x,y,z (default 1,1,1)")
    p.add_argument("--k", type=_positive_int, default=RefineConfig.k, help="Euler bins per axis (default %(default)s)")
    p.add_argument("--n-best", type=_positive_int, default=RefineConfig.n_best, help="bins promoted to the fine stage (default %(default)s)")
    p.add_argument("--isotropic", action="store_true", help="tie the three scale axes together")
    _optim_flags(p)
    _weight_flags(p)
    _soft_flags(p)
    _threads_flag(p)
    p.add_argument("--report", help="write a JSON report (loss trace, render count)")
    p.add_argument("--figure", help="write a PNG of the loss trace")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("render", help="render masks of a scene's mesh at a pose")
    p.add_argument("--scene", required=True, help="scene manifest (JSON)")
    p.add_argument("--pose", required=True, help="pose file (JSON)")
    p.add_argument("--out-dir", required=True, help="directory for view_NNN.pgm")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--hard", dest="soft", action="store_false", help="binary masks, 0/255 (default)")
    mode.add_argument("--soft", dest="soft", action="store_true", help="soft silhouettes, round(255 A)")
    _soft_flags(p)
    p.set_defaults(func=cmd_render, soft=False)

    p = sub.add_parser("eval-pose", help="ADD, ADD-S and rotation/translation errors of a pose")
    p.add_argument("--mesh", required=True, help="OBJ file or builtin shape name")
    p.add_argument("--gt", required=True, help="ground-truth pose file")
    p.add_argument("--pred", required=True, help="predicted pose file")
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("eval-grasp", help="rectangle-metric grasp accuracy")
    p.add_argument("--pred", required=True, help="predicted grasps (JSON list)")
    p.add_argument("--gt", required=True, help="ground-truth grasps (JSON list)")
    p.add_argument("--strict-angle", action="store_true", help="compare angles without the 180 degree gripper symmetry")
    p.set_defaults(func=cmd_eval_grasp)

    p = sub.add_parser("bench-synthetic", help="seeded pose-recovery benchmark")
    _scene_flags(p)
    p.add_argument("--views", type=_positive_int, default=3, help="views per scene (default %(default)s)")
    p.add_argument("--trials", type=_positive_int, default=20, help="seeded trials (default %(default)s)")
    _perturb_flags(p)
    _optim_flags(p)
    _weight_flags(p)
    _soft_flags(p)
    _threads_flag(p)
    p.add_argument("--out", required=True, help="output CSV, one row per trial")
    p.add_argument("--figure", help="PNG histogram of final rotation errors (default: next to --out)")
    p.add_argument("--timing", action="store_true", help="add a wall_time column (not reproducible)")
    p.set_defaults(func=cmd_bench_synthetic)

    p = sub.add_parser("bench-convergence", help="final loss versus number of frames")
    _scene_flags(p)
    p.add_argument("--frames", default="1:5", help="frame counts as a:b, inclusive (default %(default)s)")
    p.add_argument("--trials", type=int, default=10, help="seeded trials, >= 2 (default %(default)s)")
    _perturb_flags(p)
    _optim_flags(p)
    _weight_flags(p)
    _soft_flags(p)
    _threads_flag(p)
    p.add_argument("--out", required=True, help="output CSV, one row per frame count")
    p.add_argument("--figure", help="PNG bar chart (default: next to --out)")
    p.set_defaults(func=cmd_bench_convergence)

    p = sub.add_parser("grad-check", help="finite-difference check of the analytic pose gradient")
    p.add_argument("--seed", type=int, default=0, help="seed (default %(default)s)")
    p.add_argument("--scenes", type=_positive_int, default=20, help="random scenes (default %(default)s)")
    p.add_argument("--size", type=_positive_int, default=64, help="image size in px (default %(default)s)")
    p.add_argument("--views", type=_positive_int, default=2, help="views per scene (default %(default)s)")
    p.add_argument("--step", type=_positive_float, default=1e-7, help="central-difference step (default %(default)s)")
    p.add_argument("--tol", type=_positive_float, default=1e-3, help="pass threshold on relative error (default %(default)s)")
    _soft_flags(p)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("synth", help="write a synthetic scene: manifest, masks, poses and grasps")
    _scene_flags(p)
    p.add_argument("--views", type=_positive_int, default=3, help="number of views (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed (default %(default)s)")
    _perturb_flags(p)
    p.add_argument("--grasps", type=int, default=8, help="grasp annotations on the object (default %(default)s)")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def _cfg(args, **kw) -> RefineConfig:
    return RefineConfig(
        max_iters=args.iters,
        patience=args.patience,
        weights=LossWeights(args.lambda1, args.lambda2),
        soft=SoftParams(sigma=args.sigma),
        seed=args.seed,
        threads=args.threads,
        **kw,
    )


def _spec(args, n_views) -> harness.SceneSpec:
    return harness.SceneSpec(
        seed=args.seed,
        n_views=n_views,
        image_size=args.size,
        camera_distance=args.distance,
        baseline_min_deg=args.baseline,
        mesh_source=args.shape,
    )


def _level(args) -> harness.Perturbation:
    return harness.Perturbation(args.rot_deg, args.trans_frac, args.scale_frac)


def _figure_path(args):
    return Path(args.figure) if args.figure else Path(args.out).with_suffix(".png")


def _out(text: str) -> None:
    sys.stdout.write(text)


def cmd_refine(args) -> int:
    from .plotting import loss_trace_figure

    mesh, views = formats.load_scene(args.scene)
    coarse = formats.read_pose(args.init) if args.init else None
    extra = {"k": args.k, "n_best": args.n_best, "isotropic_scale": args.isotropic}
    if coarse is None:
        t0 = args.t0 if args.t0 is not None else tuple(initial_translation(views))
        extra.update(t0=t0, s0=args.s0)
    cfg = _cfg(args, **extra)
    pose, report = estimate_pose(mesh, views, coarse, cfg)
    formats.write_pose(args.out, pose)
    if args.report:
        doc = report.to_dict()
        doc["final_pose"] = formats.pose_to_dict(pose)
        formats.write_json(args.report, doc)
    if args.figure:
        loss_trace_figure(report.loss_trace, args.figure)
    _out(f"final_loss,{formats.format_float(report.final_loss)}\nrenders_used,{report.renders_used}\n")
    return EXIT_OK


def cmd_render(args) -> int:
    mesh, views = formats.load_scene(args.scene)
    pose = formats.read_pose(args.pose)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sp = SoftParams(sigma=args.sigma)
    for i, view in enumerate(views):
        if args.soft:
            img = formats.soft_to_pgm(render_silhouette(mesh, pose, view, sp))
        else:
            img = formats.mask_to_pgm(render_hard_mask(mesh, pose, view, sp.cull_eps))
        formats.write_pgm(out / f"view_{i:03d}.pgm", img)
    return EXIT_OK


def cmd_eval_pose(args) -> int:
    mesh = _load_mesh(args.mesh)
    gt = formats.read_pose(args.gt)
    pred = formats.read_pose(args.pred)
    row = {
        "add": add(mesh.vertices, gt, pred),
        "add_s": add_s(mesh.vertices, gt, pred),
        "geodesic_deg": math.degrees(geodesic_angle(gt.rotation, pred.rotation)),
        "translation_error": float(np.linalg.norm(gt.translation - pred.translation)),
    }
    _out(harness.to_csv([row], tuple(row)))
    return EXIT_OK


def _load_mesh(source):
    if source in harness.BUILTIN or Path(source).exists():
        return harness.load_mesh(source)
    raise formats.InputError(f"{source}: file not found and not a builtin shape")


def cmd_eval_grasp(args) -> int:
    preds = formats.read_grasps(args.pred)
    gts = formats.read_grasps(args.gt)
    if not gts:
        raise formats.InputError(f"{args.gt}: need at least one ground-truth grasp")
    rows = [(i, "true" if grasp_correct(p, gts, symmetric=not args.strict_angle) else "false") for i, p in enumerate(preds)]
    hits = sum(r[1] == "true" for r in rows)
    pct = 100.0 * hits / len(rows) if rows else 0.0
    _out(harness.to_csv(rows, ("prediction", "correct")) + f"accuracy_percent,{pct:.2f}\n")
    return EXIT_OK


def cmd_bench_synthetic(args) -> int:
    from .plotting import recovery_figure

    spec = _spec(args, args.views)
    result = harness.recovery_benchmark(spec, args.trials, (_level(args),), _cfg(args))
    harness.write_text(args.out, harness.benchmark_csv(result, timing=args.timing))
    recovery_figure(result.records, _figure_path(args))
    return EXIT_OK


def cmd_bench_convergence(args) -> int:
    from .plotting import convergence_figure

    frames = parse_range(args.frames)
    if args.trials < 2:
        raise UsageError("--trials must be >= 2")
    spec = _spec(args, 1)
    rows = harness.convergence_study(spec, frames, args.trials, _cfg(args), _level(args))
    harness.write_text(args.out, harness.to_csv(rows, harness.CONVERGENCE_COLUMNS))
    convergence_figure(rows, _figure_path(args))
    return EXIT_OK


def gradient_check(seed=0, scenes=20, size=64, views=2, step=1e-7, sigma=SoftParams.sigma):
    """Per-scene max relative error between analytic and central-difference gradients.

    Error per component is ``|a - f| / max(|a|, |f|, 1e-8)``. Scenes cycle
    through the builtin shapes, each starting from a perturbed ground truth.
    """
    sp = SoftParams(sigma=sigma)
    w = LossWeights()
    shapes = sorted(harness.BUILTIN)
    out = []
    for i in range(scenes):
        s = harness.trial_seed(seed, i)
        spec = harness.SceneSpec(seed=s, n_views=views, image_size=size, mesh_source=shapes[i % len(shapes)])
        gt, mesh, vs = harness.make_synthetic_scene(spec)
        pose = harness.perturb_pose(gt, 5.0, 0.02, 0.05, s, ref_length=spec.camera_distance)
        _, grad = multiview_loss_gradient(mesh, pose, vs, sp, w)
        analytic = grad.as_vector()
        fd = np.empty(9)
        for j in range(9):
            def f(e):
                d = np.zeros(9)
                d[j] = e
                q = Pose(pose.scale + d[:3], pose.rotation @ so3_exp(d[3:6]), pose.translation + d[6:])
                return multiview_loss(mesh, q, vs, sp, w)

            fd[j] = (f(step) - f(-step)) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
        out.append((i, s, spec.mesh_source, float(np.max(np.abs(analytic - fd) / denom))))
    return out


def cmd_grad_check(args) -> int:
    rows = gradient_check(args.seed, args.scenes, args.size, args.views, args.step, args.sigma)
    worst = max(r[3] for r in rows)
    _out(harness.to_csv(rows, ("scene", "seed", "shape", "max_rel_err")))
    _out(f"max_rel_err,{worst!r}\n")
    return EXIT_OK if worst < args.tol else EXIT_NUMERICAL


def cmd_synth(args) -> int:
    spec = _spec(args, args.views)
    gt, mesh, views = harness.make_synthetic_scene(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_obj(mesh, out / "mesh.obj")
    names = [f"view_{i:03d}.pgm" for i in range(len(views))]
    formats.write_scene(out, "mesh.obj", views, names)
    formats.write_pose(out / "gt_pose.json", gt)
    level = _level(args)
    init = harness.perturb_pose(gt, level.rot_deg, level.trans_frac, level.scale_frac, args.seed, ref_length=spec.camera_distance)
    formats.write_pose(out / "init_pose.json", init)
    if args.grasps > 0:
        grasps = harness.synthetic_grasps(mesh, args.seed, args.grasps)
        for i, view in enumerate(views):
            formats.write_grasps(out / f"grasps_{i:03d}.json", harness.grasp_rects(grasps, gt, view))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"mvpose: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MvposeError, ValueError, OSError) as exc:
        print(f"mvpose: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
