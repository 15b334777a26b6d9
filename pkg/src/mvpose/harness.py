"""Seeded synthetic scenes and benchmark studies.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``
(PCG-XSL-RR 128/64, O'Neill 2014), so streams are reproducible and portable.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Extrinsics, Intrinsics, View
from .errors import ConfigError
from .geometry import Pose, TriMesh, geodesic_angle, load_obj, random_rotation, so3_exp
from .losses import multiview_loss
from .metrics import GraspRect, add, grasp_correct, grasp_to_camera
from .refine import RefineConfig, estimate_pose
from .render import render_hard_mask
from .shapes import BUILTIN, builtin

FOCAL_FACTOR = 1.1  # focal length in units of image size
FIBONACCI_POINTS = 256


def rng_for(seed: int, *stream) -> np.random.Generator:
    """Independent generator for ``seed`` and an optional stream path."""
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return np.random.Generator(np.random.PCG64(ss))


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1)[0])


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_views: int = 3
    image_size: int = 128
    camera_distance: float = 5.0
    baseline_min_deg: float = 45.0
    mesh_source: str = "cube"

    def __post_init__(self):
        if self.n_views < 1:
            raise ConfigError("n_views must be >= 1")
        if not 0 <= self.baseline_min_deg < 180:
            raise ConfigError("baseline_min_deg must lie in [0, 180)")
        if self.image_size < 1 or self.camera_distance <= 0:
            raise ConfigError("image_size and camera_distance must be positive")

    def replace(self, **kw) -> "SceneSpec":
        d = self.__dict__.copy()
        d.update(kw)
        return SceneSpec(**d)


def load_mesh(source: str) -> TriMesh:
    if source in BUILTIN:
        return builtin(source)
    return load_obj(source)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def camera_directions(n_views: int, baseline_min_deg: float, rng) -> np.ndarray:
    """Unit directions with pairwise separation >= baseline, greedily picked."""
    pts = fibonacci_sphere(FIBONACCI_POINTS) @ random_rotation(rng).T
    order = rng.permutation(len(pts))
    cos_max = math.cos(math.radians(baseline_min_deg))
    chosen = []
    for i in order:
        p = pts[i]
        if all(np.dot(p, q) <= cos_max + 1e-12 for q in chosen):
            chosen.append(p)
            if len(chosen) == n_views:
                return np.array(chosen)
    raise ConfigError(
        f"cannot place {n_views} cameras with {baseline_min_deg} degree minimum separation"
    )


def make_intrinsics(image_size: int) -> Intrinsics:
    f = FOCAL_FACTOR * image_size
    c = image_size / 2.0
    return Intrinsics(f, f, c, c, image_size, image_size)


def make_cameras(spec: SceneSpec, rng) -> list[Extrinsics]:
    dirs = camera_directions(spec.n_views, spec.baseline_min_deg, rng)
    return [Extrinsics.look_at(spec.camera_distance * d) for d in dirs]


def sample_gt_pose(spec: SceneSpec, rng) -> Pose:
    d = spec.camera_distance
    return Pose(
        scale=np.exp(rng.uniform(math.log(0.8), math.log(1.25), 3)),
        rotation=random_rotation(rng),
        translation=rng.uniform(-0.1 * d, 0.1 * d, 3),
    )


def make_synthetic_scene(spec: SceneSpec):
    """``(gt_pose, mesh, views)``, a pure function of ``spec``."""
    rng = rng_for(spec.seed)
    mesh = load_mesh(spec.mesh_source)
    gt = sample_gt_pose(spec, rng)
    k = make_intrinsics(spec.image_size)
    views = []
    for ext in make_cameras(spec, rng):
        blank = View(k, ext, np.zeros(k.shape, dtype=bool))
        views.append(View(k, ext, render_hard_mask(mesh, gt, blank)))
    return gt, mesh, views


def retarget(mesh: TriMesh, pose: Pose, views) -> list[View]:
    """The same cameras with targets re-rendered at ``pose``."""
    return [View(v.intrinsics, v.extrinsics, render_hard_mask(mesh, pose, v)) for v in views]


def perturb_pose(pose: Pose, rot_deg: float, trans_frac: float, scale_frac: float, seed: int, ref_length=None) -> Pose:
    """Deterministic perturbation of exact rotation angle and translation length.

    The translation offset has length ``trans_frac * ref_length``;
    ``ref_length`` defaults to ``|t|``.
    """
    if min(rot_deg, trans_frac, scale_frac) < 0:
        raise ValueError("perturbation magnitudes must be >= 0")
    rng = rng_for(seed, 1)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    u = rng.uniform(-scale_frac, scale_frac, 3)
    length = float(np.linalg.norm(pose.translation)) if ref_length is None else float(ref_length)
    return Pose(
        scale=pose.scale * np.exp(u),
        rotation=pose.rotation @ so3_exp(math.radians(rot_deg) * axis),
        translation=pose.translation + trans_frac * length * direction,
    )


def scale_error(gt: Pose, pred: Pose) -> float:
    """Largest per-axis relative scale error."""
    return float(np.max(np.abs(pred.scale / gt.scale - 1.0)))


@dataclass(frozen=True)
class Perturbation:
    rot_deg: float = 10.0
    trans_frac: float = 0.05
    scale_frac: float = 0.1


@dataclass
class BenchmarkResult:
    records: list
    aggregate: dict

    FIELDS = (
        "init_rot_deg",
        "final_rot_deg",
        "init_trans_err",
        "final_trans_err",
        "init_scale_err",
        "final_scale_err",
        "final_add",
        "init_loss",
        "final_loss",
        "renders_used",
        "wall_time",
    )

    @classmethod
    def from_records(cls, records) -> "BenchmarkResult":
        agg = {}
        for f in cls.FIELDS:
            vals = np.array([r[f] for r in records], dtype=float)
            agg[f] = (float(vals.mean()), float(vals.std()))
        return cls(records, agg)


def _one_trial(spec: SceneSpec, trial: int, level: Perturbation, cfg: RefineConfig):
    seed = trial_seed(spec.seed, trial)
    gt, mesh, views = make_synthetic_scene(spec.replace(seed=seed))
    coarse = perturb_pose(gt, level.rot_deg, level.trans_frac, level.scale_frac, seed, ref_length=spec.camera_distance)
    start = time.perf_counter()
    pose, report = estimate_pose(mesh, views, coarse, cfg)
    elapsed = time.perf_counter() - start
    record = {
        "trial": trial,
        "seed": seed,
        "shape": spec.mesh_source,
        "rot_deg": level.rot_deg,
        "trans_frac": level.trans_frac,
        "scale_frac": level.scale_frac,
        "init_rot_deg": math.degrees(geodesic_angle(gt.rotation, coarse.rotation)),
        "final_rot_deg": math.degrees(geodesic_angle(gt.rotation, pose.rotation)),
        "init_trans_err": float(np.linalg.norm(coarse.translation - gt.translation)),
        "final_trans_err": float(np.linalg.norm(pose.translation - gt.translation)),
        "init_scale_err": scale_error(gt, coarse),
        "final_scale_err": scale_error(gt, pose),
        "final_add": add(mesh.vertices, gt, pose),
        "init_loss": report.loss_trace[0],
        "final_loss": report.final_loss,
        "renders_used": report.renders_used,
        "wall_time": elapsed,
    }
    return record, (gt, mesh, views, pose)


def recovery_benchmark(spec: SceneSpec, trials: int, levels=(Perturbation(),), cfg: RefineConfig = RefineConfig(), keep_poses=False):
    """Refine perturbed ground truth over seeded trials and perturbation levels."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    records, scenes = [], []
    for level in levels:
        for trial in range(trials):
            record, scene = _one_trial(spec, trial, level, cfg)
            records.append(record)
            if keep_poses:
                scenes.append(scene)
    result = BenchmarkResult.from_records(records)
    return (result, scenes) if keep_poses else result


def convergence_study(spec: SceneSpec, frames=(1, 2, 3, 4, 5), trials: int = 10, cfg: RefineConfig = RefineConfig(), level: Perturbation = Perturbation(), n_eval: int = 3):
    """Final loss versus number of frames used for refinement.

    Each trial draws one scene with ``max(frames) + n_eval`` cameras and one
    perturbed start. Refinement with ``n`` frames uses the first ``n``
    cameras; its result is scored on the ``n_eval`` held-out cameras, so the
    numbers are comparable across frame counts. Returns rows of
    ``(n_frames, mean_loss, std_loss)``.
    """
    if trials < 2:
        raise ConfigError("trials must be >= 2")
    frames = list(frames)
    if not frames or min(frames) < 1:
        raise ConfigError("frame counts must be >= 1")
    n_max = max(frames)
    losses = {n: [] for n in frames}
    for trial in range(trials):
        seed = trial_seed(spec.seed, trial)
        gt, mesh, views = make_synthetic_scene(spec.replace(seed=seed, n_views=n_max + n_eval))
        fit_views, eval_views = views[:n_max], views[n_max:]
        coarse = perturb_pose(gt, level.rot_deg, level.trans_frac, level.scale_frac, seed, ref_length=spec.camera_distance)
        for n in frames:
            pose, _ = estimate_pose(mesh, fit_views[:n], coarse, cfg)
            losses[n].append(multiview_loss(mesh, pose, eval_views, cfg.soft, cfg.weights, cfg.threads))
    rows = []
    for n in frames:
        vals = np.array(losses[n])
        rows.append((n, float(vals.mean()), float(vals.std(ddof=1))))
    return rows


# -- grasp annotations ---------------------------------------------------------


@dataclass(frozen=True)
class ObjectGrasp:
    """Grasp annotation attached to the object frame; rectangle sides in pixels."""

    center: tuple
    angle: float
    width: float
    height: float


def synthetic_grasps(mesh: TriMesh, seed: int, n: int = 8) -> list[ObjectGrasp]:
    """Grasps centred on random mesh vertices with random in-plane angles."""
    rng = rng_for(seed, 2)
    idx = rng.choice(len(mesh.vertices), size=n, replace=len(mesh.vertices) < n)
    return [
        ObjectGrasp(
            center=tuple(mesh.vertices[i] * 0.5),
            angle=float(rng.uniform(0, math.pi)),
            width=float(rng.uniform(16, 28)),
            height=float(rng.uniform(8, 14)),
        )
        for i in idx
    ]


def grasp_rects(grasps, pose: Pose, view: View) -> list[GraspRect]:
    return [grasp_to_camera(g.center, g.angle, pose, view, g.width, g.height) for g in grasps]


def grasp_sanity(grasps, gt: Pose, pred: Pose, views) -> float:
    """Grasp accuracy (%) of ``pred``-projected annotations against ``gt``-projected ones.

    Each prediction is judged against its own annotation's ground-truth
    rectangle in every view.
    """
    hits = total = 0
    for view in views:
        for g in grasps:
            ref = grasp_to_camera(g.center, g.angle, gt, view, g.width, g.height)
            got = grasp_to_camera(g.center, g.angle, pred, view, g.width, g.height)
            hits += grasp_correct(got, [ref])
            total += 1
    return 100.0 * hits / total


# -- CSV output ----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c] if isinstance(r, dict) else r[i]) for i, c in enumerate(columns)])
    return buf.getvalue()


RECORD_COLUMNS = (
    "trial", "seed", "shape", "rot_deg", "trans_frac", "scale_frac",
    "init_rot_deg", "final_rot_deg", "init_trans_err", "final_trans_err",
    "init_scale_err", "final_scale_err", "final_add", "init_loss", "final_loss",
    "renders_used",
)
CONVERGENCE_COLUMNS = ("n_frames", "mean_final_loss", "std_final_loss")


def benchmark_csv(result: BenchmarkResult, timing: bool = False) -> str:
    cols = RECORD_COLUMNS + (("wall_time",) if timing else ())
    return to_csv(result.records, cols)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
